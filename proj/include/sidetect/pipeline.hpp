#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sidetect/corpus.hpp"
#include "sidetect/detectors/detector.hpp"
#include "sidetect/detectors/encoder_classifier.hpp"
#include "sidetect/detectors/generative.hpp"
#include "sidetect/detectors/statistical.hpp"
#include "sidetect/evaluation.hpp"
#include "sidetect/generation.hpp"
#include "sidetect/instruction.hpp"

// Declarative run configuration and the build/train/evaluate/analyze/report
// commands behind the command-line tool.
namespace sidetect::pipeline {

struct GenerationSettings {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model_id = "gpt-3.5-turbo-0301";
    std::string api_key_env = "DETECT_API_KEY";
    int parallelism = 4;
    double rate_per_second = 0.0;
    bool mock = false;
    json params = json{{"temperature", 0.7}};
    std::vector<generation::PromptTemplate> templates = generation::default_templates();
    bool keep_unpaired = false;

    // Model id written to requests and the manifest; mock output is cached
    // under its own id so it never mixes with real generations.
    std::string effective_model_id() const { return mock ? "mock/" + model_id : model_id; }
};

struct DetectorSettings {
    detectors::DetectorKind kind = detectors::DetectorKind::statistical;
    // Per-kind training configuration; defaults to TrainConfig{} when absent.
    std::optional<detectors::TrainConfig> train;
    detectors::StatisticalOptions statistical;
    detectors::EncoderOptions encoder;
    detectors::Stage1Config stage1;
    bool free_generation = false;
    // Seeds not given in the file follow the run seed.
    bool train_seed_explicit = false;
    bool stage1_seed_explicit = false;
};

struct RunConfig {
    std::filesystem::path config_path;  // file the config was read from
    std::filesystem::path output_dir;   // absolute
    uint64_t seed = 0;
    std::string run_id;  // defaults to the detector kind
    std::vector<corpus::CorpusDecl> corpora;
    corpus::SplitSpec split;
    bool split_seed_explicit = false;
    GenerationSettings generation;
    DetectorSettings detector;
    std::filesystem::path schema_path;  // empty: built-in schema
    std::vector<evaluation::Format> formats{evaluation::Format::markdown, evaluation::Format::csv};
    int overlap_n = 2;

    std::filesystem::path dataset_dir() const { return output_dir / "dataset"; }
    std::filesystem::path cache_journal() const { return output_dir / "cache" / "generations.jsonl"; }
    std::filesystem::path run_dir() const { return output_dir / "runs" / run_id; }
    std::filesystem::path report_dir() const { return output_dir / "reports" / run_id; }
    std::filesystem::path reports_root() const { return output_dir / "reports"; }
    std::filesystem::path stage1_cache() const { return output_dir / "stage1"; }

    instruction::SchemaConfig schema() const;
    detectors::TrainConfig train_config() const;  // with the run seed applied
    detectors::Stage1Config stage1_config() const;
    corpus::SplitSpec split_spec() const;
};

// Paths in the file are relative to its directory. Throws ConfigError for
// malformed JSON, unknown enums or fields of the wrong type.
RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Command-line overrides, applied after loading.
struct Overrides {
    std::optional<uint64_t> seed;
    std::optional<bool> mock;
    std::optional<std::string> run_id;
    std::vector<evaluation::Format> formats;
    std::optional<detectors::DetectorKind> kind;
};
void apply_overrides(RunConfig& config, const Overrides& overrides);

// Checks everything that can be checked without doing work: input paths,
// split corpora, schema file, credentials for live generation. Throws
// ConfigError.
void validate_config(const RunConfig& config, bool needs_generation);

using Log = std::function<void(const std::string&)>;

struct BuildResult {
    bool up_to_date = false;
    size_t pairs = 0;
    size_t samples = 0;
    size_t client_calls = 0;
    size_t refused = 0;
    size_t failed = 0;
    corpus::CorpusManifest manifest;
};

// Fingerprint of everything a build depends on: corpus files, generation
// settings, split spec and seed.
std::string build_fingerprint(const RunConfig& config);

// ingest -> generate -> assemble -> split -> store. Reports "up-to-date"
// when the stored dataset already matches the fingerprint and validates.
// `client` replaces the configured endpoint (tests).
BuildResult cmd_build(const RunConfig& config, const Log& log = {}, generation::ChatClient* client = nullptr,
                      bool force = false);

struct TrainResult {
    std::filesystem::path run_dir;
    std::vector<detectors::Checkpoint> checkpoints;
    detectors::Checkpoint best;
    std::filesystem::path best_handle;
    detectors::TrainConfig train_config;
};

// Trains the configured detector kind on the train split and records the
// checkpoint with the best validation accuracy in run_dir/best.json.
TrainResult cmd_train(const RunConfig& config, const Log& log = {});

// Handle recorded by cmd_train for the configured run.
std::filesystem::path best_handle_path(const RunConfig& config);

struct EvaluateResult {
    std::vector<evaluation::Prediction> predictions;
    evaluation::OverallReport report;
    std::vector<std::filesystem::path> written;
};

// Predicts the test split and writes table1/table2 in every configured
// format plus predictions.jsonl under reports/<run_id>/. An empty
// `handle_path` means the run's best checkpoint.
EvaluateResult cmd_evaluate(const RunConfig& config, const std::filesystem::path& handle_path = {},
                            const Log& log = {});

// Writes reports/<run_id>/overlap.md over every stored sample.
std::filesystem::path cmd_analyze(const RunConfig& config, const Log& log = {});

// Re-renders table1 per run and a combined table2 (one row per run) from the
// stored prediction dumps into reports/summary/.
std::vector<std::filesystem::path> cmd_report(const RunConfig& config, const std::vector<std::string>& run_ids = {},
                                              const Log& log = {});

// Writes <run_dir>/best.json; also used after manual checkpoint edits.
void record_best(const std::filesystem::path& run_dir, const detectors::Checkpoint& best);

// Exit code of an exception: 2 config, 3 data, 4 training, 5 evaluation,
// 1 anything else.
int exit_code_for(const std::exception& e);
// {"error": {"type", "exit_code", "message"}}
json error_report(const std::exception& e);

}  // namespace sidetect::pipeline
