#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sidetect/error.hpp"
#include "sidetect/records.hpp"

namespace sidetect::instruction {

struct LabelSurfaces {
    std::string human;
    std::string model;
};

// Strings that frame each block of an assembled prompt. `example_header`
// contains "{n}", replaced by the 1-based example number.
struct Layout {
    std::string definition_prefix = "Definition:";
    std::string example_header = "Positive Example {n} -";
    std::string target_header = "Now complete the following example -";
    std::string input_prefix = "Input:";
    std::string output_prefix = "Output:";

    std::string header_for(size_t n) const;
    // Every literal the layout writes, for the model tokenizer.
    std::vector<std::string> delimiters(size_t max_examples = 2) const;
};

enum class PositivesMode { resample, fixed };

struct SchemaConfig {
    std::map<Language, std::string> definitions;
    std::map<Language, LabelSurfaces> surfaces;
    Layout layout;
    PositivesMode positives_mode = PositivesMode::resample;
    // Budgets are in text::tokenize units; 0 disables the limit.
    size_t max_example_tokens = 48;
    size_t max_content_tokens = 200;

    static SchemaConfig defaults();
};

json to_json(const SchemaConfig& config);
// Missing keys fall back to defaults(); bad values raise ConfigError.
SchemaConfig schema_from_json(const json& j);
SchemaConfig load_schema_config(const std::filesystem::path& path);

struct TaskDefinition {
    std::string text;
    Language language = Language::en;
};

struct PositiveExample {
    std::string input_text;
    Label output_label = Label::human;

    friend bool operator==(const PositiveExample&, const PositiveExample&) = default;
};

struct InstructionPrompt {
    TaskDefinition definition;
    std::vector<PositiveExample> positives;
    std::string target_text;
    std::string assembled;
    size_t token_count = 0;  // text::model_tokens of `assembled`
};

TaskDefinition definition_for(const SchemaConfig& config, Language language);
const std::string& label_surface(const SchemaConfig& config, Label label, Language language);

// Picks one model-labeled and one human-labeled sample, returned in the
// order [model, human]. The choice depends only on (seed, instance_id) and
// the pool. Samples whose id equals instance_id, or whose pair_id equals
// exclude_pair_id, are never chosen. Throws DataError if a label is missing.
std::vector<PositiveExample> select_positive_examples(const std::vector<Sample>& pool, uint64_t seed,
                                                      std::string_view instance_id,
                                                      std::string_view exclude_pair_id = {});

// Generic layout: definition block, one input/output block per example,
// then the target input with an empty output slot.
std::string assemble_layout(const Layout& layout, std::string_view definition,
                            const std::vector<std::pair<std::string, std::string>>& examples,
                            std::string_view target);

struct ParsedLayout {
    std::string definition;
    std::vector<std::pair<std::string, std::string>> examples;
    std::string target;

    friend bool operator==(const ParsedLayout&, const ParsedLayout&) = default;
};

// Inverse of assemble_layout; throws DataError on malformed input.
ParsedLayout parse_layout(const Layout& layout, std::string_view assembled);

// Requires exactly two positives, one per label (DataError otherwise).
// Positives are truncated to max_example_tokens first; the target is only
// cut if the content still exceeds max_content_tokens. Truncation drops
// tokens from the front of a text.
InstructionPrompt assemble_prompt(const TaskDefinition& definition,
                                  const std::vector<PositiveExample>& positives,
                                  std::string_view target_text,
                                  const SchemaConfig& config = SchemaConfig::defaults());

// Convenience: definition for the sample's language, positives drawn from
// the same-language part of the pool (excluding the sample's own pair),
// keyed per instance or globally according to positives_mode.
InstructionPrompt build_prompt(const SchemaConfig& config, const std::vector<Sample>& pool,
                               uint64_t seed, const Sample& target);

class UnparseableLabel : public DataError {
public:
    using DataError::DataError;
};

// Case-insensitive, whitespace-trimmed match against every configured label
// surface. Throws UnparseableLabel when nothing matches.
Label normalize_label(std::string_view generated, const SchemaConfig& config = SchemaConfig::defaults());

// Keeps the last `budget` tokens of `text` (budget 0 keeps everything).
std::string truncate_front(std::string_view text, Language language, size_t budget);

}  // namespace sidetect::instruction
