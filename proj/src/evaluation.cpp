#include "sidetect/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "sidetect/text.hpp"

namespace sidetect::evaluation {

namespace {

const char* const kUndefined = "—";

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string cell(const std::optional<double>& v) { return v ? fixed2(*v) : kUndefined; }

std::optional<double> ratio(size_t num, size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

constexpr std::array<Task, 4> kGroupOrder{Task::qa, Task::translation, Task::summarization, Task::paraphrasing};

}  // namespace

json to_json(const Prediction& p) {
    return json{{"sample_id", p.sample_id},         {"gold", to_string(p.gold)},
                {"predicted", to_string(p.predicted)}, {"score", p.score},
                {"task", to_string(p.task)},         {"source_corpus", p.source_corpus},
                {"language", to_string(p.language)}};
}

Prediction prediction_from_json(const json& j) {
    try {
        Prediction p;
        p.sample_id = j.at("sample_id").get<std::string>();
        p.gold = parse_label(j.at("gold").get<std::string>());
        p.predicted = parse_label(j.at("predicted").get<std::string>());
        p.score = j.at("score").get<double>();
        p.task = parse_task(j.at("task").get<std::string>());
        p.source_corpus = j.at("source_corpus").get<std::string>();
        p.language = parse_language(j.value("language", std::string("en")));
        return p;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed prediction: ") + e.what());
    }
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    tp_human += o.tp_human;
    fn_human += o.fn_human;
    tp_model += o.tp_model;
    fn_model += o.fn_model;
    return *this;
}

ConfusionCounts confusion(const std::vector<std::pair<Label, Label>>& gold_predicted) {
    ConfusionCounts c;
    for (const auto& [gold, pred] : gold_predicted) {
        if (gold == Label::human) (pred == Label::human ? c.tp_human : c.fn_human)++;
        else (pred == Label::model ? c.tp_model : c.fn_model)++;
    }
    return c;
}

ConfusionCounts confusion(const std::vector<Prediction>& predictions) {
    std::vector<std::pair<Label, Label>> gp;
    gp.reserve(predictions.size());
    for (const auto& p : predictions) gp.emplace_back(p.gold, p.predicted);
    return confusion(gp);
}

ClassMetrics class_metrics(const ConfusionCounts& c) {
    if (c.total() == 0) throw EvaluationError("class metrics over zero predictions");
    ClassMetrics m;
    m.precision_human = ratio(c.tp_human, c.tp_human + c.fn_model);
    m.recall_human = ratio(c.tp_human, c.tp_human + c.fn_human);
    m.precision_model = ratio(c.tp_model, c.tp_model + c.fn_human);
    m.recall_model = ratio(c.tp_model, c.tp_model + c.fn_model);
    m.accuracy = static_cast<double>(c.tp_human + c.tp_model) / static_cast<double>(c.total());
    return m;
}

std::vector<Table1Row> table1_rows(const std::vector<Prediction>& predictions) {
    std::vector<Table1Row> rows;
    std::map<std::string, size_t> index;
    for (const auto& p : predictions) {
        auto [it, inserted] = index.emplace(p.source_corpus, rows.size());
        if (inserted) rows.push_back({p.source_corpus, {}, {}});
        rows[it->second].counts += confusion(std::vector<std::pair<Label, Label>>{{p.gold, p.predicted}});
    }
    for (auto& r : rows) r.metrics = class_metrics(r.counts);
    return rows;
}

std::string group_name(Task task) {
    switch (task) {
        case Task::qa: return "HC3";
        case Task::translation: return "Translation";
        case Task::summarization: return "Summarization";
        case Task::paraphrasing: return "Paraphrasing";
    }
    throw EvaluationError("unknown task");
}

TaskReport per_task_report(const std::vector<Prediction>& predictions) {
    struct Tally {
        size_t correct = 0, count = 0;
    };
    std::map<Task, std::vector<std::pair<std::string, Tally>>> by_task;
    for (const auto& p : predictions) {
        auto& corpora = by_task[p.task];
        auto it = std::find_if(corpora.begin(), corpora.end(),
                               [&](const auto& e) { return e.first == p.source_corpus; });
        if (it == corpora.end()) it = corpora.insert(corpora.end(), {p.source_corpus, Tally{}});
        it->second.count++;
        if (p.gold == p.predicted) it->second.correct++;
    }
    TaskReport report;
    for (Task task : kGroupOrder) {
        auto it = by_task.find(task);
        if (it == by_task.end()) continue;
        GroupRow row{group_name(task), 0.0, 0, {}};
        size_t correct = 0;
        for (const auto& [corpus, t] : it->second) {
            row.corpora.push_back({corpus, static_cast<double>(t.correct) / static_cast<double>(t.count), t.count});
            correct += t.correct;
            row.count += t.count;
        }
        row.accuracy = static_cast<double>(correct) / static_cast<double>(row.count);
        report.groups.push_back(std::move(row));
    }
    return report;
}

OverallReport overall_report(const TaskReport& tasks, Weighting weighting) {
    OverallReport r{tasks, 0.0, 0, weighting};
    double weighted = 0.0, plain = 0.0;
    size_t nonempty = 0;
    for (const auto& g : tasks.groups) {
        r.total += g.count;
        weighted += g.accuracy * static_cast<double>(g.count);
        if (g.count > 0) {
            plain += g.accuracy;
            ++nonempty;
        }
    }
    if (r.total == 0) throw EvaluationError("overall report over zero samples");
    r.overall = weighting == Weighting::micro ? weighted / static_cast<double>(r.total)
                                              : plain / static_cast<double>(nonempty);
    return r;
}

double solve_group_size(const std::vector<AccuracyRow>& known, double unknown_accuracy, double target_overall) {
    // target * (K + N) = S + a * N  =>  N = (target*K - S) / (a - target)
    double k = 0.0, s = 0.0;
    for (const auto& row : known) {
        k += static_cast<double>(row.count);
        s += row.accuracy * static_cast<double>(row.count);
    }
    double denom = unknown_accuracy - target_overall;
    if (std::abs(denom) < 1e-12) throw EvaluationError("group accuracy equals the target overall");
    double n = (target_overall * k - s) / denom;
    if (!(n > 0.0)) throw EvaluationError("no positive group size reaches the target overall");
    return n;
}

Format parse_format(std::string_view name) {
    if (name == "markdown" || name == "md") return Format::markdown;
    if (name == "csv") return Format::csv;
    throw ConfigError("unknown report format '" + std::string(name) + "'");
}

std::string_view extension(Format format) { return format == Format::csv ? "csv" : "md"; }

std::string render_table1(const std::vector<Table1Row>& rows, Format format) {
    std::ostringstream os;
    if (format == Format::csv) {
        os << "dataset,human_precision,human_recall,model_precision,model_recall,accuracy\n";
        for (const auto& r : rows) {
            const auto& m = r.metrics;
            os << r.dataset << ',' << cell(m.precision_human) << ',' << cell(m.recall_human) << ','
               << cell(m.precision_model) << ',' << cell(m.recall_model) << ',' << fixed2(m.accuracy) << '\n';
        }
        return os.str();
    }
    os << "Gold class: Human (columns 2-3), Model (columns 4-5).\n\n";
    os << "| Dataset | Precision | Recall | Precision | Recall | Accuracy |\n";
    os << "|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        os << "| " << r.dataset << " | " << cell(m.precision_human) << " | " << cell(m.recall_human) << " | "
           << cell(m.precision_model) << " | " << cell(m.recall_model) << " | " << fixed2(m.accuracy) << " |\n";
    }
    return os.str();
}

namespace {

std::optional<double> group_accuracy(const OverallReport& r, const std::string& group) {
    for (const auto& g : r.tasks.groups)
        if (g.group == group) return g.accuracy;
    return std::nullopt;
}

std::string percent(const std::optional<double>& v) { return v ? fixed2(*v * 100.0) : kUndefined; }

}  // namespace

std::string render_table2(const std::vector<NamedReport>& reports, Format format) {
    std::vector<std::string> groups;
    for (Task t : kGroupOrder) groups.push_back(group_name(t));
    std::ostringstream os;
    const std::string sep = format == Format::csv ? "," : " | ";
    auto row = [&](const std::vector<std::string>& cells) {
        if (format == Format::markdown) os << "| ";
        for (size_t i = 0; i < cells.size(); ++i) os << (i ? sep : "") << cells[i];
        os << (format == Format::markdown ? " |\n" : "\n");
    };
    std::vector<std::string> header{"Model"};
    header.insert(header.end(), groups.begin(), groups.end());
    header.push_back("Overall");
    row(header);
    if (format == Format::markdown) os << "|---|---|---|---|---|---|\n";
    for (const auto& nr : reports) {
        std::vector<std::string> cells{nr.model};
        for (const auto& g : groups) cells.push_back(percent(group_accuracy(nr.report, g)));
        cells.push_back(percent(nr.report.overall));
        row(cells);
    }
    if (format == Format::markdown) {
        for (const auto& nr : reports) {
            os << "\n" << nr.model << " by corpus ("
               << (nr.report.weighting == Weighting::micro ? "micro" : "macro") << " overall over "
               << nr.report.total << " samples):\n\n";
            os << "| Group | Corpus | Accuracy | Samples |\n|---|---|---|---|\n";
            for (const auto& g : nr.report.tasks.groups)
                for (const auto& c : g.corpora)
                    os << "| " << g.group << " | " << c.name << " | " << fixed2(c.accuracy * 100.0) << " | "
                       << c.count << " |\n";
        }
    }
    return os.str();
}

std::vector<ParsedRow> parse_csv_table(const std::string& csv) {
    std::vector<ParsedRow> rows;
    std::istringstream in(csv);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string c;
        std::istringstream ls(line);
        while (std::getline(ls, c, ',')) cells.push_back(c);
        if (cells.empty()) continue;
        ParsedRow r{cells[0], {}};
        for (size_t i = 1; i < cells.size(); ++i) {
            if (cells[i] == kUndefined) r.values.push_back(std::nullopt);
            else {
                try {
                    r.values.push_back(std::stod(cells[i]));
                } catch (const std::exception&) {
                    throw DataError("non-numeric report cell '" + cells[i] + "'");
                }
            }
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace sidetect::evaluation
