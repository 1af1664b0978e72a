#pragma once

#include <functional>
#include <map>
#include <memory>
#include <random>

#include "sidetect/detectors/detector.hpp"
#include "sidetect/detectors/training.hpp"
#include "sidetect/instruction.hpp"
#include "sidetect/nn/transformer.hpp"

namespace sidetect::detectors {

// One instance of a toy instruction task in the definition + two examples +
// target layout.
struct ToyInstance {
    std::string definition;
    std::vector<std::pair<std::string, std::string>> examples;
    std::string input;
    std::string output;
};

struct ToyTask {
    std::string name;
    std::function<ToyInstance(std::mt19937_64&)> sample;
};

struct ToyTaskOptions {
    size_t word_pool = 400;
    size_t label_pool = 20;
};

// copy, reverse-words, label-lookup, label-match, label-parity, first-word.
// The default curriculum is the first four; label-parity slows the
// label-match transition, and first-word serves as an unseen-task probe.
ToyTask toy_task(std::string_view name, const ToyTaskOptions& options = {});
std::vector<ToyTask> default_toy_tasks(const ToyTaskOptions& options = {});
std::vector<std::string> toy_words(const ToyTaskOptions& options = {});

// Throws DataError unless the instance has a definition, exactly two
// examples and a non-empty output.
void validate_instance(const ToyInstance& instance);
std::string assemble(const ToyInstance& instance, const instruction::Layout& layout);

nn::TransformerConfig default_generative_model();

struct Stage1Config {
    TrainConfig train{60, 1e-3, 16, 0, 320};  // epochs is an upper bound
    // Stop once every task's held-out exact match reaches this (checked each
    // epoch). Values above 1 disable early stopping.
    double target_exact_match = 0.98;
    int settle_epochs = 4;  // extra epochs after the target is first reached
    size_t instances_per_task = 600;
    size_t held_out_per_task = 50;
    bool resample_each_epoch = true;  // fresh instances every epoch
    instruction::Layout layout;
    ToyTaskOptions toy;

    json to_json() const;
    static Stage1Config from_json(const json& j);
};

// Seq2seq model whose vocabulary covers the toy tasks, the detection schema
// and the layout delimiters, with hashed buckets for unseen words.
nn::Seq2SeqModel make_base_model(const std::vector<ToyTask>& tasks, const Stage1Config& config,
                                 const instruction::SchemaConfig& schema = instruction::SchemaConfig::defaults(),
                                 const nn::TransformerConfig& model = default_generative_model());

struct Stage1Result {
    std::unique_ptr<nn::Seq2SeqModel> model;
    std::map<std::string, double> held_out_exact_match;
    std::vector<EpochLog> log;
};

// Multi-task training on the toy tasks. Throws DataError for fewer than two
// tasks or an instance that violates the schema.
Stage1Result stage1_instruction_tune(nn::Seq2SeqModel base_lm, const std::vector<ToyTask>& tasks,
                                     const Stage1Config& config = {});

std::string generate_text(const nn::Seq2SeqModel& model, std::string_view prompt, int max_tokens = 24);

double exact_match(const nn::Seq2SeqModel& model, const std::vector<ToyInstance>& instances,
                   const instruction::Layout& layout);

struct InstructionSample {
    instruction::InstructionPrompt prompt;
    Label gold = Label::human;
};

// Scores the two label surfaces and takes the argmax (constrained decoding).
// With free_generation, a greedy decode is tried first and the scored
// decision is the fallback when it does not parse as a label.
class GenerativeDetector : public Detector {
public:
    GenerativeDetector(std::shared_ptr<const nn::Seq2SeqModel> model, instruction::SchemaConfig schema,
                       std::shared_ptr<const std::vector<Sample>> pool, uint64_t prompt_seed,
                       bool free_generation = false);

    DetectorKind kind() const override { return DetectorKind::generative; }
    DetectorOutput predict(const DetectorInput& input) const override;
    DetectorOutput predict_sample(const Sample& sample) const override;

    instruction::InstructionPrompt prompt_for(const Sample& sample) const;

    // Writes model/, schema.json and generative.json; the positive pool is
    // referenced by `pool_file` relative to dir.
    void save(const std::filesystem::path& dir, const std::string& pool_file) const;
    static GenerativeDetector load(const std::filesystem::path& dir);

    const nn::Seq2SeqModel& model() const { return *model_; }

private:
    std::shared_ptr<const nn::Seq2SeqModel> model_;
    instruction::SchemaConfig schema_;
    std::shared_ptr<const std::vector<Sample>> pool_;
    uint64_t prompt_seed_;
    bool free_generation_;
};

struct Stage2Options {
    TrainOptions train;
    instruction::SchemaConfig schema = instruction::SchemaConfig::defaults();
    std::vector<Sample> positive_pool;  // source of positives for val/test prompts
    uint64_t prompt_seed = 0;
    bool free_generation = false;
};

std::vector<InstructionSample> instruction_samples(const std::vector<Sample>& samples,
                                                   const std::vector<Sample>& pool,
                                                   const instruction::SchemaConfig& schema, uint64_t seed);

// Teacher-forced fine-tuning on the label surface of each prompt. Writes one
// checkpoint per epoch (model, optimizer state, schema) under
// options.train.run_dir; throws DataError on empty data.
NeuralTrainResult stage2_finetune_detector(nn::Seq2SeqModel lm_inst, const std::vector<InstructionSample>& data,
                                           const TrainConfig& config = {}, const Stage2Options& options = {});

}  // namespace sidetect::detectors
