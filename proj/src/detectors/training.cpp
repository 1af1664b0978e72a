#include "sidetect/detectors/training.hpp"

#include <algorithm>
#include <fstream>
#include <cmath>
#include <numeric>

#include "sidetect/error.hpp"
#include "sidetect/text.hpp"

namespace sidetect::detectors {

void TrainConfig::validate() const {
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (max_sequence_length <= 0) throw ConfigError("max_sequence_length must be positive");
}

json TrainConfig::to_json() const {
    return json{{"epochs", epochs},
                {"learning_rate", learning_rate},
                {"batch_size", batch_size},
                {"seed", seed},
                {"max_sequence_length", max_sequence_length}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", c.seed);
        c.max_sequence_length = j.value("max_sequence_length", c.max_sequence_length);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

json EpochLog::to_json() const {
    json j{{"epoch", epoch}, {"loss", loss}};
    j["val_accuracy"] = val_accuracy ? json(*val_accuracy) : json(nullptr);
    return j;
}

EpochLog EpochLog::from_json(const json& j) {
    EpochLog e;
    e.epoch = j.at("epoch").get<int>();
    e.loss = j.at("loss").get<double>();
    if (j.contains("val_accuracy") && !j["val_accuracy"].is_null()) e.val_accuracy = j["val_accuracy"].get<double>();
    return e;
}

std::filesystem::path epoch_dir(const std::filesystem::path& run_dir, int epoch) {
    return run_dir / ("epoch-" + std::to_string(epoch));
}

void append_train_log(const std::filesystem::path& run_dir, const EpochLog& entry) {
    std::filesystem::create_directories(run_dir);
    std::ofstream out(run_dir / "train_log.jsonl", std::ios::app);
    out << entry.to_json().dump() << '\n';
    if (!out) throw TrainingError("cannot write training log in " + run_dir.string());
}

std::vector<EpochLog> read_train_log(const std::filesystem::path& run_dir) {
    std::vector<EpochLog> out;
    auto path = run_dir / "train_log.jsonl";
    if (!std::filesystem::exists(path)) return out;
    for (const auto& j : io::read_jsonl(path)) out.push_back(EpochLog::from_json(j));
    return out;
}

std::vector<size_t> epoch_order(size_t n, uint64_t seed, int epoch) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(io::stable_hash64("order:" + std::to_string(seed) + ":" + std::to_string(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

size_t best_index(const std::vector<double>& accuracies) {
    if (accuracies.empty()) throw TrainingError("no checkpoints to select from");
    size_t best = 0;
    for (size_t i = 1; i < accuracies.size(); ++i)
        if (accuracies[i] > accuracies[best]) best = i;
    return best;
}

Checkpoint select_best_checkpoint(const std::vector<Checkpoint>& checkpoints) {
    return select_best_checkpoint(checkpoints, [](const Checkpoint& c) {
        if (!c.val_accuracy) throw TrainingError("checkpoint epoch-" + std::to_string(c.epoch) + " has no validation accuracy");
        return *c.val_accuracy;
    });
}

Checkpoint select_best_checkpoint(const std::vector<Checkpoint>& checkpoints,
                                  const std::function<double(const Checkpoint&)>& accuracy_of) {
    if (checkpoints.empty()) throw TrainingError("no checkpoints to select from");
    std::vector<Checkpoint> sorted = checkpoints;
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.epoch < b.epoch; });
    std::vector<double> acc;
    for (const auto& c : sorted) acc.push_back(accuracy_of(c));
    Checkpoint best = sorted[best_index(acc)];
    best.val_accuracy = acc[best_index(acc)];
    return best;
}

std::vector<Checkpoint> list_checkpoints(const std::filesystem::path& run_dir) {
    std::vector<Checkpoint> out;
    if (!std::filesystem::is_directory(run_dir)) return out;
    auto logs = read_train_log(run_dir);
    for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
        auto name = entry.path().filename().string();
        if (!entry.is_directory() || name.rfind("epoch-", 0) != 0) continue;
        Checkpoint c;
        try {
            c.epoch = std::stoi(name.substr(6));
        } catch (const std::exception&) {
            continue;
        }
        c.dir = entry.path();
        for (const auto& l : logs)
            if (l.epoch == c.epoch) c.val_accuracy = l.val_accuracy;
        out.push_back(c);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.epoch < b.epoch; });
    return out;
}

}  // namespace sidetect::detectors

namespace sidetect::detectors {

void run_training_loop(nn::ParameterSet& params, nn::Adam& optimizer, size_t n_items, const TrainConfig& config,
                       int first_epoch, const std::function<nn::Var(nn::Tape&, size_t)>& item_loss,
                       const std::function<void(int, double)>& end_of_epoch,
                       const std::function<void(int)>& before_epoch, const std::function<bool(int)>& stop_after) {
    config.validate();
    if (n_items == 0) throw DataError("empty training data");
    const auto batch = static_cast<size_t>(config.batch_size);
    const auto lr = static_cast<float>(config.learning_rate);
    for (int epoch = first_epoch; epoch <= config.epochs; ++epoch) {
        if (before_epoch) before_epoch(epoch);
        auto order = epoch_order(n_items, config.seed, epoch);
        double total = 0.0;
        for (size_t start = 0; start < order.size(); start += batch) {
            size_t end = std::min(order.size(), start + batch);
            nn::Gradients grads;
            for (size_t i = start; i < end; ++i) {
                nn::Tape tape;
                nn::Var loss = item_loss(tape, order[i]);
                double value = tape.value(loss)(0, 0);
                if (!std::isfinite(value)) throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
                total += value;
                tape.backward(loss, grads);
            }
            grads.scale(1.0f / static_cast<float>(end - start));
            optimizer.step(params, grads, lr);
        }
        end_of_epoch(epoch, total / static_cast<double>(n_items));
        if (stop_after && stop_after(epoch)) break;
    }
}

void save_trainer_state(const std::filesystem::path& dir, int epoch, const nn::Adam& optimizer,
                        const nn::ParameterSet& params) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "optimizer.bin", std::ios::binary);
    optimizer.save(out, params);
    if (!out) throw TrainingError("cannot write optimizer state in " + dir.string());
    io::write_file(dir / "trainer.json", json{{"epoch", epoch}}.dump() + "\n");
}

int load_trainer_state(const std::filesystem::path& dir, nn::Adam& optimizer, const nn::ParameterSet& params) {
    if (!std::filesystem::exists(dir / "optimizer.bin") || !std::filesystem::exists(dir / "trainer.json"))
        throw DataError("no resumable trainer state in " + dir.string());
    std::ifstream in(dir / "optimizer.bin", std::ios::binary);
    optimizer.load(in, params);
    return json::parse(io::read_file(dir / "trainer.json")).at("epoch").get<int>();
}

}  // namespace sidetect::detectors
