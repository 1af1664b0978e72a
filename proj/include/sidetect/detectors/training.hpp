#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sidetect/io.hpp"
#include "sidetect/nn/tape.hpp"
#include "sidetect/records.hpp"

namespace sidetect::detectors {

struct TrainConfig {
    int epochs = 4;
    double learning_rate = 1e-4;
    int batch_size = 32;
    uint64_t seed = 0;
    int max_sequence_length = 320;

    // Throws ConfigError on non-positive values.
    void validate() const;
    json to_json() const;
    static TrainConfig from_json(const json& j);
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochLog {
    int epoch = 0;
    double loss = 0.0;
    std::optional<double> val_accuracy;

    json to_json() const;
    static EpochLog from_json(const json& j);
};

struct Checkpoint {
    int epoch = 0;
    std::filesystem::path dir;  // runs/<run_id>/epoch-<k>
    std::optional<double> val_accuracy;
};

std::filesystem::path epoch_dir(const std::filesystem::path& run_dir, int epoch);

// Appends one line to <run_dir>/train_log.jsonl.
void append_train_log(const std::filesystem::path& run_dir, const EpochLog& entry);
std::vector<EpochLog> read_train_log(const std::filesystem::path& run_dir);

// Shuffled index order for one epoch, a pure function of (seed, epoch), so a
// resumed run sees the same batches as an uninterrupted one.
std::vector<size_t> epoch_order(size_t n, uint64_t seed, int epoch);

// Index of the highest accuracy; ties go to the earliest entry. Throws
// TrainingError on an empty list.
size_t best_index(const std::vector<double>& accuracies);

// Checkpoint with the highest val_accuracy (earliest epoch on ties). Every
// checkpoint must carry a val_accuracy.
Checkpoint select_best_checkpoint(const std::vector<Checkpoint>& checkpoints);

// Same, evaluating each checkpoint with `accuracy_of`.
Checkpoint select_best_checkpoint(const std::vector<Checkpoint>& checkpoints,
                                  const std::function<double(const Checkpoint&)>& accuracy_of);

// Optional behaviour shared by the neural trainers.
struct TrainOptions {
    std::filesystem::path run_dir;           // checkpoints go to run_dir/epoch-<k>
    std::vector<Sample> val;          // validation samples, may be empty
    std::filesystem::path resume_from;       // an epoch-<k> directory to continue from
    std::function<void(const std::string&)> warn;  // defaults to stderr
};

// Mini-batch loop: each batch averages item losses, then takes one Adam step.
// Calls end_of_epoch(epoch, mean item loss) after every epoch, starting at
// first_epoch (1-based). Stops early once stop_after(epoch) returns true.
void run_training_loop(nn::ParameterSet& params, nn::Adam& optimizer, size_t n_items, const TrainConfig& config,
                       int first_epoch, const std::function<nn::Var(nn::Tape&, size_t)>& item_loss,
                       const std::function<void(int, double)>& end_of_epoch,
                       const std::function<void(int)>& before_epoch = {},
                       const std::function<bool(int)>& stop_after = {});

// Optimizer state and epoch counter stored beside a checkpoint.
void save_trainer_state(const std::filesystem::path& dir, int epoch, const nn::Adam& optimizer,
                        const nn::ParameterSet& params);
// Returns the stored epoch.
int load_trainer_state(const std::filesystem::path& dir, nn::Adam& optimizer, const nn::ParameterSet& params);

// Lists epoch-<k> directories of a run in epoch order.
std::vector<Checkpoint> list_checkpoints(const std::filesystem::path& run_dir);

}  // namespace sidetect::detectors
