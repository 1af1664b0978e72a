#include "sidetect/types.hpp"

#include "sidetect/error.hpp"

namespace sidetect {

std::string_view to_string(Task task) {
    switch (task) {
        case Task::qa: return "qa";
        case Task::translation: return "translation";
        case Task::summarization: return "summarization";
        case Task::paraphrasing: return "paraphrasing";
    }
    return "?";
}

std::string_view to_string(Language language) {
    return language == Language::en ? "en" : "zh";
}

std::string_view to_string(Label label) {
    return label == Label::human ? "human" : "model";
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

Task parse_task(std::string_view name) {
    for (Task t : kAllTasks) {
        if (to_string(t) == name) return t;
    }
    throw DataError("unknown task '" + std::string(name) + "'");
}

Language parse_language(std::string_view name) {
    if (name == "en") return Language::en;
    if (name == "zh") return Language::zh;
    throw DataError("unknown language '" + std::string(name) + "'");
}

Label parse_label(std::string_view name) {
    if (name == "human") return Label::human;
    if (name == "model") return Label::model;
    throw DataError("unknown label '" + std::string(name) + "'");
}

Split parse_split(std::string_view name) {
    for (Split s : kAllSplits) {
        if (to_string(s) == name) return s;
    }
    throw DataError("unknown split '" + std::string(name) + "'");
}

}  // namespace sidetect
