#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sidetect/records.hpp"

namespace sidetect::corpus {

enum class InputFormat { tsv, jsonl };

// One configured source corpus. For TSV input the first line is a header
// naming the columns; field names map onto it the same way as JSONL keys.
struct CorpusDecl {
    std::string id;
    std::filesystem::path path;
    InputFormat format = InputFormat::jsonl;
    Task task = Task::summarization;
    Language language = Language::en;
    std::string source_field = "source";
    std::string target_field = "target";
    // Copied into every PairRecord.extra. Translation corpora need
    // "source_language" here or in a per-row column named by
    // source_language_field.
    std::map<std::string, std::string> extra;
    std::string source_language_field;
};

CorpusDecl corpus_decl_from_json(const json& j, const std::filesystem::path& base_dir);
json to_json(const CorpusDecl& decl);

class CorpusRegistry {
public:
    CorpusRegistry() = default;
    explicit CorpusRegistry(std::vector<CorpusDecl> decls);

    // Throws ConfigError for an unknown id.
    const CorpusDecl& find(std::string_view corpus_id) const;
    const std::vector<CorpusDecl>& decls() const { return decls_; }

private:
    std::vector<CorpusDecl> decls_;
};

struct IngestResult {
    std::vector<PairRecord> pairs;
    size_t rows_read = 0;
    size_t dropped_empty = 0;
};

// Pair ids are "<corpus_id>-<row index>", counting data rows from zero, so a
// dropped row leaves a gap rather than renumbering later rows.
IngestResult ingest_source_corpus(const CorpusDecl& decl);
IngestResult ingest_source_corpus(const CorpusRegistry& registry, std::string_view corpus_id);

struct AssembleOptions {
    bool keep_unpaired = false;
};

// Generations whose status is not ok count as missing. Sample ids are the
// pair id plus "#h" or "#m".
std::vector<Sample> assemble_detection_samples(
    const std::vector<PairRecord>& pairs,
    const std::map<std::string, GenerationRecord>& generations,
    const AssembleOptions& options = {});

struct SplitCounts {
    size_t train = 0;
    size_t val = 0;
    size_t test = 0;
    size_t total() const { return train + val + test; }
    size_t get(Split s) const;
    friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

// Per-corpus targets, counted in pairs.
struct SplitSpec {
    std::map<std::string, SplitCounts> per_corpus;
    uint64_t seed = 0;
};

SplitSpec split_spec_from_json(const json& j);

// Pairs of each corpus are ranked by a seeded hash of their pair id and cut
// into train/val/test in that order; both samples of a pair share a split.
// Samples beyond the requested counts are not returned.
std::vector<Sample> split_corpus(const std::vector<Sample>& samples, const SplitSpec& spec);

struct ManifestCell {
    std::string source_corpus;
    Language language = Language::en;
    Split split = Split::train;
    size_t count = 0;
};

struct CorpusManifest {
    std::vector<ManifestCell> cells;  // sorted by (corpus, split)
    std::map<Language, SplitCounts> totals;
    size_t total = 0;
    std::string generation_model;
    std::string build_timestamp;
    uint64_t seed = 0;
    std::string fingerprint;
};

CorpusManifest build_manifest(const std::vector<Sample>& samples, std::string generation_model,
                              std::string build_timestamp, uint64_t seed);
json to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(const json& j);

struct CellCheck {
    std::string source_corpus;
    Split split = Split::train;
    size_t expected = 0;
    size_t actual = 0;
    size_t human = 0;
    size_t model = 0;
    double human_fraction = 0.0;  // 0.5 when balanced
    bool matches() const { return expected == actual; }
};

struct ValidationReport {
    std::vector<CellCheck> cells;
    std::vector<std::string> mismatches;  // one entry per failing cell or total
    std::vector<std::string> duplicate_ids;
    bool passed() const { return mismatches.empty() && duplicate_ids.empty(); }
};

// Also checks the manifest's own totals against its cells and reports stored
// cells the manifest does not list.
ValidationReport validate_manifest(const CorpusManifest& manifest,
                                   const std::vector<Sample>& dataset);

// Full-scale sample counts of the semantic-invariant extension, per corpus.
// The per-cell counts sum to 214,498 samples, while the accompanying prose
// rounds the total to 210,000; the cell values are the ones used as targets.
struct ReferenceCell {
    std::string source_corpus;
    Language language;
    SplitCounts samples;
};
const std::vector<ReferenceCell>& reference_split_sizes();
SplitCounts reference_totals(Language language);

// One JSONL file per (corpus, split), named "<corpus>.<split>.jsonl", plus
// manifest.json.
void store_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                   const CorpusManifest& manifest);

struct StoredDataset {
    CorpusManifest manifest;
    std::vector<Sample> samples;
};
StoredDataset load_dataset(const std::filesystem::path& dir);

std::vector<Sample> filter_split(const std::vector<Sample>& samples, Split split);

}  // namespace sidetect::corpus
