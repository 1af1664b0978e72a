#pragma once

#include <map>
#include <optional>
#include <string>

#include "sidetect/io.hpp"
#include "sidetect/types.hpp"

namespace sidetect {

// A source text with its human-written target, before machine generation.
struct PairRecord {
    std::string pair_id;
    std::string source_text;
    std::string human_target;
    Task task = Task::qa;
    Language language = Language::en;  // language of the target text
    std::string source_corpus;
    std::map<std::string, std::string> extra;  // e.g. source_language
};

// One labeled detection instance. `split` is unset until split_corpus runs.
struct Sample {
    std::string sample_id;
    std::string pair_id;
    std::string text;
    Label label = Label::human;
    Task task = Task::qa;
    Language language = Language::en;
    std::string source_corpus;
    std::optional<Split> split;
    std::string source_text;

    friend bool operator==(const Sample&, const Sample&) = default;
};

enum class GenerationStatus { ok, refused, error };

std::string_view to_string(GenerationStatus status);
GenerationStatus parse_generation_status(std::string_view name);

struct GenerationRecord {
    std::string pair_id;
    std::string prompt;
    std::string model_id;
    json params = json::object();  // temperature, max_tokens, ...
    std::string output;
    GenerationStatus status = GenerationStatus::error;
    std::string cache_key;
    std::string created_at;  // ISO-8601 UTC
    int retries = 0;
    std::string error_message;

    friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

json to_json(const PairRecord& pair);
PairRecord pair_from_json(const json& j);

// Field order is part of the on-disk format.
json to_json(const Sample& sample);
Sample sample_from_json(const json& j);

json to_json(const GenerationRecord& record);
GenerationRecord generation_from_json(const json& j);

}  // namespace sidetect
