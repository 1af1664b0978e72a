#pragma once

#include <array>
#include <string>
#include <string_view>

namespace sidetect {

enum class Task { qa, translation, summarization, paraphrasing };
enum class Language { en, zh };
enum class Label { human, model };
enum class Split { train, val, test };

inline constexpr std::array<Task, 4> kAllTasks{Task::qa, Task::translation, Task::summarization,
                                               Task::paraphrasing};
inline constexpr std::array<Split, 3> kAllSplits{Split::train, Split::val, Split::test};
inline constexpr std::array<Label, 2> kAllLabels{Label::human, Label::model};

std::string_view to_string(Task task);
std::string_view to_string(Language language);
std::string_view to_string(Label label);
std::string_view to_string(Split split);

// Parsers throw DataError on unknown names.
Task parse_task(std::string_view name);
Language parse_language(std::string_view name);
Label parse_label(std::string_view name);
Split parse_split(std::string_view name);

inline Label other(Label label) { return label == Label::human ? Label::model : Label::human; }

}  // namespace sidetect
