#include "sidetect/records.hpp"

#include "sidetect/error.hpp"

namespace sidetect {

std::string_view to_string(GenerationStatus status) {
    switch (status) {
        case GenerationStatus::ok: return "ok";
        case GenerationStatus::refused: return "refused";
        case GenerationStatus::error: return "error";
    }
    return "?";
}

GenerationStatus parse_generation_status(std::string_view name) {
    if (name == "ok") return GenerationStatus::ok;
    if (name == "refused") return GenerationStatus::refused;
    if (name == "error") return GenerationStatus::error;
    throw DataError("unknown generation status '" + std::string(name) + "'");
}

namespace {

const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw DataError(std::string("missing field '") + key + "'");
    return *it;
}

std::string require_string(const json& j, const char* key) {
    const json& v = require(j, key);
    if (!v.is_string()) throw DataError(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

}  // namespace

json to_json(const PairRecord& pair) {
    json extra = json::object();
    for (const auto& [k, v] : pair.extra) extra[k] = v;
    return json{{"pair_id", pair.pair_id},
                {"source_text", pair.source_text},
                {"human_target", pair.human_target},
                {"task", to_string(pair.task)},
                {"language", to_string(pair.language)},
                {"source_corpus", pair.source_corpus},
                {"extra", extra}};
}

PairRecord pair_from_json(const json& j) {
    PairRecord p;
    p.pair_id = require_string(j, "pair_id");
    p.source_text = require_string(j, "source_text");
    p.human_target = require_string(j, "human_target");
    p.task = parse_task(require_string(j, "task"));
    p.language = parse_language(require_string(j, "language"));
    p.source_corpus = require_string(j, "source_corpus");
    if (auto it = j.find("extra"); it != j.end()) {
        for (const auto& [k, v] : it->items()) p.extra[k] = v.get<std::string>();
    }
    return p;
}

json to_json(const Sample& s) {
    json j;
    j["sample_id"] = s.sample_id;
    j["pair_id"] = s.pair_id;
    j["text"] = s.text;
    j["label"] = to_string(s.label);
    j["task"] = to_string(s.task);
    j["language"] = to_string(s.language);
    j["source_corpus"] = s.source_corpus;
    j["split"] = s.split ? json(to_string(*s.split)) : json(nullptr);
    j["source_text"] = s.source_text;
    return j;
}

Sample sample_from_json(const json& j) {
    Sample s;
    s.sample_id = require_string(j, "sample_id");
    s.pair_id = require_string(j, "pair_id");
    s.text = require_string(j, "text");
    s.label = parse_label(require_string(j, "label"));
    s.task = parse_task(require_string(j, "task"));
    s.language = parse_language(require_string(j, "language"));
    s.source_corpus = require_string(j, "source_corpus");
    if (const json& split = require(j, "split"); !split.is_null()) {
        s.split = parse_split(split.get<std::string>());
    }
    s.source_text = require_string(j, "source_text");
    return s;
}

json to_json(const GenerationRecord& r) {
    return json{{"pair_id", r.pair_id},     {"prompt", r.prompt},
                {"model_id", r.model_id},   {"params", r.params},
                {"output", r.output},       {"status", to_string(r.status)},
                {"cache_key", r.cache_key}, {"created_at", r.created_at},
                {"retries", r.retries},     {"error_message", r.error_message}};
}

GenerationRecord generation_from_json(const json& j) {
    GenerationRecord r;
    r.pair_id = require_string(j, "pair_id");
    r.prompt = require_string(j, "prompt");
    r.model_id = require_string(j, "model_id");
    r.params = require(j, "params");
    r.output = require_string(j, "output");
    r.status = parse_generation_status(require_string(j, "status"));
    r.cache_key = require_string(j, "cache_key");
    r.created_at = require_string(j, "created_at");
    r.retries = j.value("retries", 0);
    r.error_message = j.value("error_message", std::string{});
    return r;
}

}  // namespace sidetect
