#include "sidetect/detectors/encoder_classifier.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

#include "sidetect/text.hpp"

namespace sidetect::detectors {

nn::TransformerConfig EncoderOptions::default_model() {
    nn::TransformerConfig c;
    c.d_model = 64;
    c.heads = 4;
    c.ffn_dim = 128;
    c.encoder_layers = 2;
    c.decoder_layers = 0;
    c.token_match_bias = false;
    return c;
}

json EncoderOptions::to_json() const {
    json j{{"model", model.to_json()}};
    if (!init_from.empty()) j["init_from"] = init_from.string();
    return j;
}

EncoderOptions EncoderOptions::from_json(const json& j) {
    EncoderOptions o;
    if (j.contains("model")) {
        json merged = o.model.to_json();
        merged.update(j["model"]);
        o.model = nn::TransformerConfig::from_json(merged);
    }
    if (j.contains("init_from")) o.init_from = j["init_from"].get<std::string>();
    return o;
}

EncoderClassifier::EncoderClassifier(nn::TransformerConfig config, nn::Vocabulary vocab, int max_sequence_length,
                                     uint64_t seed)
    : config_(config), vocab_(std::move(vocab)), max_len_(max_sequence_length), seed_(seed) {
    config_.max_positions = max_len_;
    std::mt19937_64 rng(seed);
    const int d = config_.d_model;
    params_.add_normal("tok_emb", vocab_.size(), d, config_.init_std, rng);
    params_.add_normal("enc_pos", max_len_, d, config_.init_std, rng);
    nn::add_encoder_layers(params_, "enc", config_, config_.encoder_layers, rng);
    params_.add_normal("cls.w", d, 2, 1.0f / std::sqrt(static_cast<float>(d)), rng);
    params_.add_constant("cls.b", 1, 2, 0.0f);
}

std::vector<int> EncoderClassifier::encode(std::string_view input) const {
    auto tokens = text::model_tokens(input);
    const auto cap = static_cast<size_t>(max_len_);
    if (tokens.size() > cap) tokens.erase(tokens.begin(), tokens.end() - static_cast<std::ptrdiff_t>(cap));
    if (tokens.empty()) return {nn::Vocabulary::kUnk};
    return vocab_.encode(tokens);
}

nn::Var EncoderClassifier::logits(nn::Tape& t, const std::vector<int>& ids) const {
    std::vector<int> positions(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);
    nn::Var x = t.add(t.embed(params_.get("tok_emb"), ids), t.embed(params_.get("enc_pos"), positions));
    x = nn::encoder_layers_forward(t, params_, "enc", config_, config_.encoder_layers, x, ids);
    return t.linear(t.mean_rows(x), params_.get("cls.w"), &params_.get("cls.b"));
}

double EncoderClassifier::model_probability(std::string_view input) const {
    nn::Tape t;
    const auto& z = t.value(logits(t, encode(input)));
    double diff = static_cast<double>(z(0, 1)) - static_cast<double>(z(0, 0));
    return 1.0 / (1.0 + std::exp(-diff));
}

DetectorOutput EncoderClassifier::predict(const DetectorInput& input) const {
    const auto* s = std::get_if<std::string>(&input);
    if (!s) throw KindMismatch("encoder detector expects raw text, got an instruction prompt");
    double p = model_probability(*s);
    return {p >= 0.5 ? Label::model : Label::human, p};
}

size_t EncoderClassifier::init_from_seq2seq(const std::filesystem::path& dir) {
    auto base = nn::Seq2SeqModel::load(dir);
    size_t copied = 0;
    for (const auto& p : params_.all()) {
        if (p->name == "tok_emb" || p->name.rfind("enc.", 0) != 0) continue;
        if (!base.params().contains(p->name)) continue;
        const auto& src = base.params().get(p->name).value;
        if (src.rows() != p->value.rows() || src.cols() != p->value.cols()) continue;
        p->value = src;
        ++copied;
    }
    const auto& src_emb = base.params().get("tok_emb").value;
    auto& emb = params_.get("tok_emb").value;
    if (src_emb.cols() == emb.cols()) {
        for (int id = 0; id < vocab_.size(); ++id) {
            int other = base.vocab().id(vocab_.token(id));
            if (other != nn::Vocabulary::kUnk || vocab_.token(id) == "<unk>") emb.row(id) = src_emb.row(other);
        }
        ++copied;
    }
    return copied;
}

void EncoderClassifier::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    json meta{{"kind", "encoder_classifier"},
              {"config", config_.to_json()},
              {"max_sequence_length", max_len_},
              {"seed", seed_},
              {"vocab", vocab_.to_json()}};
    io::write_file(dir / "model.json", meta.dump() + "\n");
    std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
    params_.save(out);
    if (!out) throw DataError("failed writing " + (dir / "params.bin").string());
}

EncoderClassifier EncoderClassifier::load(const std::filesystem::path& dir) {
    json meta;
    try {
        meta = json::parse(io::read_file(dir / "model.json"));
    } catch (const json::parse_error& e) {
        throw DataError("invalid model.json in " + dir.string() + ": " + e.what());
    }
    EncoderClassifier m(nn::TransformerConfig::from_json(meta.at("config")), nn::Vocabulary::from_json(meta.at("vocab")),
                        meta.at("max_sequence_length").get<int>(), meta.value("seed", uint64_t{0}));
    std::ifstream in(dir / "params.bin", std::ios::binary);
    if (!in) throw DataError("missing params.bin in " + dir.string());
    m.params_.load(in);
    return m;
}

NeuralTrainResult train_encoder_classifier(const std::vector<Sample>& train, const TrainConfig& config,
                                           const EncoderOptions& encoder, const TrainOptions& options) {
    config.validate();
    if (train.empty()) throw DataError("empty training split");
    if (options.run_dir.empty()) throw ConfigError("train_encoder_classifier needs a run directory");
    auto warn = options.warn ? options.warn : [](const std::string& m) { std::cerr << "warning: " << m << "\n"; };

    size_t n_model = 0;
    for (const auto& s : train) n_model += s.label == Label::model;
    double share = static_cast<double>(n_model) / static_cast<double>(train.size());
    if (share < 0.4 || share > 0.6)
        warn("training data is imbalanced: model-class share " + std::to_string(share));

    std::unique_ptr<EncoderClassifier> model;
    nn::Adam optimizer;
    int first_epoch = 1;
    if (!options.resume_from.empty()) {
        model = std::make_unique<EncoderClassifier>(EncoderClassifier::load(options.resume_from));
        first_epoch = load_trainer_state(options.resume_from, optimizer, model->params()) + 1;
    } else {
        nn::Vocabulary vocab;
        for (const auto& s : train)
            for (const auto& tok : text::model_tokens(s.text)) vocab.add(tok);
        model = std::make_unique<EncoderClassifier>(encoder.model, std::move(vocab), config.max_sequence_length,
                                                    config.seed);
        if (!encoder.init_from.empty()) model->init_from_seq2seq(encoder.init_from);
    }

    std::vector<std::vector<int>> ids;
    std::vector<int> targets;
    for (const auto& s : train) {
        ids.push_back(model->encode(s.text));
        targets.push_back(s.label == Label::model ? 1 : 0);
    }
    json snapshot{{"train", config.to_json()}, {"encoder", encoder.to_json()}};

    NeuralTrainResult result;
    run_training_loop(
        model->params(), optimizer, train.size(), config, first_epoch,
        [&](nn::Tape& t, size_t i) {
            return t.softmax_cross_entropy(model->logits(t, ids[i]), std::span<const int>(&targets[i], 1));
        },
        [&](int epoch, double loss) {
            EpochLog entry{epoch, loss, std::nullopt};
            if (!options.val.empty()) entry.val_accuracy = accuracy(*model, options.val);
            auto dir = epoch_dir(options.run_dir, epoch);
            model->save(dir);
            save_trainer_state(dir, epoch, optimizer, model->params());
            DetectorHandle h{DetectorKind::encoder, dir, snapshot};
            h.save(dir / "handle.json");
            append_train_log(options.run_dir, entry);
            result.checkpoints.push_back({epoch, dir, entry.val_accuracy});
            result.log.push_back(entry);
            result.final_handle = h;
        });
    result.train_accuracy = accuracy(*model, train);
    return result;
}

}  // namespace sidetect::detectors
