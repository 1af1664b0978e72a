#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sidetect/error.hpp"
#include "sidetect/records.hpp"

namespace sidetect::evaluation {

struct Prediction {
    std::string sample_id;
    Label gold = Label::human;
    Label predicted = Label::human;
    double score = 0.0;  // probability of the model class
    Task task = Task::qa;
    std::string source_corpus;
    Language language = Language::en;
};

// Dump order: sample_id, gold, predicted, score, then task/corpus/language
// so reports can be re-rendered from the dump alone.
json to_json(const Prediction& p);
Prediction prediction_from_json(const json& j);

// tp_x: gold x predicted x. fn_x: gold x predicted the other class.
struct ConfusionCounts {
    size_t tp_human = 0;
    size_t fn_human = 0;
    size_t tp_model = 0;
    size_t fn_model = 0;

    size_t total() const { return tp_human + fn_human + tp_model + fn_model; }
    ConfusionCounts& operator+=(const ConfusionCounts& o);
    friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(const std::vector<std::pair<Label, Label>>& gold_predicted);
ConfusionCounts confusion(const std::vector<Prediction>& predictions);

// Undefined ratios (zero denominator) are nullopt.
struct ClassMetrics {
    std::optional<double> precision_human;
    std::optional<double> recall_human;
    std::optional<double> precision_model;
    std::optional<double> recall_model;
    double accuracy = 0.0;
};

// Throws EvaluationError on empty counts.
ClassMetrics class_metrics(const ConfusionCounts& counts);

struct Table1Row {
    std::string dataset;
    ConfusionCounts counts;
    ClassMetrics metrics;
};

// One row per source corpus, in first-seen order.
std::vector<Table1Row> table1_rows(const std::vector<Prediction>& predictions);

struct AccuracyRow {
    std::string name;
    double accuracy = 0.0;
    size_t count = 0;
};

struct GroupRow {
    std::string group;  // HC3, Translation, Summarization, Paraphrasing
    double accuracy = 0.0;
    size_t count = 0;
    std::vector<AccuracyRow> corpora;  // drill-down
};

struct TaskReport {
    std::vector<GroupRow> groups;  // fixed group order, empty groups omitted
};

std::string group_name(Task task);

// Group accuracy is micro-weighted over its corpora.
TaskReport per_task_report(const std::vector<Prediction>& predictions);

enum class Weighting { micro, macro };

struct OverallReport {
    TaskReport tasks;
    double overall = 0.0;
    size_t total = 0;
    Weighting weighting = Weighting::micro;
};

// Throws EvaluationError when the rows hold no samples.
OverallReport overall_report(const TaskReport& tasks, Weighting weighting = Weighting::micro);

// Size N of a group with accuracy `unknown_accuracy` that makes the micro
// overall equal `target_overall`, given the other groups. Throws
// EvaluationError when no positive solution exists.
double solve_group_size(const std::vector<AccuracyRow>& known, double unknown_accuracy, double target_overall);

enum class Format { markdown, csv };
Format parse_format(std::string_view name);
std::string_view extension(Format format);

// Per-corpus table: dataset, human precision/recall, model precision/recall,
// accuracy; 2-decimal rounding, undefined values as "—".
std::string render_table1(const std::vector<Table1Row>& rows, Format format);

struct NamedReport {
    std::string model;
    OverallReport report;
};

// Summary table: one row per model, accuracy percentages with 2 decimals
// per group plus Overall. The markdown form adds a per-corpus drill-down.
std::string render_table2(const std::vector<NamedReport>& reports, Format format);

struct ParsedRow {
    std::string name;
    std::vector<std::optional<double>> values;
};
// Reads back a csv produced by render_table1/render_table2.
std::vector<ParsedRow> parse_csv_table(const std::string& csv);

}  // namespace sidetect::evaluation
