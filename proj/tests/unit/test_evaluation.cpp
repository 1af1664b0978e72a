#include <doctest.h>

#include <algorithm>
#include <random>

#include "../common/oracles.hpp"
#include "sidetect/evaluation.hpp"

using namespace sidetect;
using namespace sidetect::evaluation;

namespace {

Prediction pred(Label gold, Label predicted, Task task, std::string corpus) {
    Prediction p;
    p.sample_id = corpus + std::to_string(static_cast<int>(gold)) + std::to_string(static_cast<int>(predicted));
    p.gold = gold;
    p.predicted = predicted;
    p.task = task;
    p.source_corpus = std::move(corpus);
    return p;
}

std::vector<Prediction> with_accuracy(Task task, const std::string& corpus, size_t correct, size_t n) {
    std::vector<Prediction> out;
    for (size_t i = 0; i < n; ++i) {
        Label g = i % 2 ? Label::human : Label::model;
        out.push_back(pred(g, i < correct ? g : other(g), task, corpus));
    }
    return out;
}

}  // namespace

TEST_CASE("confusion tallies") {
    CHECK(confusion(std::vector<std::pair<Label, Label>>{}) == ConfusionCounts{});
    std::vector<std::pair<Label, Label>> all_right(10, {Label::human, Label::human});
    all_right[3] = {Label::model, Label::model};
    auto c = confusion(all_right);
    CHECK(c.fn_human == 0);
    CHECK(c.fn_model == 0);
    // Six hand-listed pairs: (h,h) (h,m) (m,m) (m,h) (m,h) (h,h)
    auto six = confusion({{Label::human, Label::human}, {Label::human, Label::model}, {Label::model, Label::model},
                          {Label::model, Label::human}, {Label::model, Label::human}, {Label::human, Label::human}});
    CHECK(six == ConfusionCounts{2, 1, 1, 2});
}

TEST_CASE("class metrics on the CNN/DailyMail confusion fixture") {
    auto m = class_metrics({2982, 18, 1260, 1740});
    auto row = render_table1({{"cnn_dailymail", {2982, 18, 1260, 1740}, m}}, Format::csv);
    CHECK(row.find("cnn_dailymail,0.63,0.99,0.99,0.42,0.71") != std::string::npos);
    CHECK(*m.precision_human == doctest::Approx(2982.0 / 4722.0));
    auto perfect = class_metrics({5, 0, 5, 0});
    CHECK(*perfect.precision_human == 1.0);
    CHECK(*perfect.recall_model == 1.0);
    CHECK(perfect.accuracy == 1.0);
    auto no_gold_model = class_metrics({3, 4, 0, 0});
    CHECK_FALSE(no_gold_model.recall_model.has_value());
    CHECK(*no_gold_model.precision_model == 0.0);
    auto undefined = class_metrics({3, 0, 0, 0});
    CHECK_FALSE(undefined.precision_model.has_value());
    CHECK_FALSE(undefined.recall_model.has_value());
    CHECK_THROWS_AS(class_metrics({}), EvaluationError);
}

TEST_CASE("class metrics match the brute-force oracle") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 500; ++trial) {
        auto gp = oracle::random_predictions(rng, 50);
        auto m = class_metrics(confusion(gp));
        auto o = oracle::brute_force_metrics(gp);
        CHECK(m.precision_human == o.precision_human);
        CHECK(m.precision_model == o.precision_model);
        CHECK(m.recall_human == o.recall_human);
        CHECK(m.recall_model == o.recall_model);
        CHECK(m.accuracy == o.accuracy);
        auto shuffled = gp;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(confusion(shuffled) == confusion(gp));
        auto mid = gp.begin() + static_cast<std::ptrdiff_t>(gp.size() / 2);
        std::vector<std::pair<Label, Label>> a(gp.begin(), mid), b(mid, gp.end());
        CHECK(confusion(a) + confusion(b) == confusion(gp));
    }
}

TEST_CASE("per-task report groups corpora with micro weighting") {
    auto preds = with_accuracy(Task::translation, "wmt_a", 10, 10);
    auto more = with_accuracy(Task::translation, "wmt_b", 15, 30);
    preds.insert(preds.end(), more.begin(), more.end());
    auto r = per_task_report(preds);
    REQUIRE(r.groups.size() == 1);
    CHECK(r.groups[0].group == "Translation");
    CHECK(r.groups[0].accuracy == doctest::Approx(0.625));
    CHECK(r.groups[0].corpora.size() == 2);
    CHECK(r.groups[0].count == 40);
}

TEST_CASE("overall report") {
    auto a = with_accuracy(Task::qa, "hc3", 6, 10);
    auto b = with_accuracy(Task::summarization, "cnn", 60, 100);
    a.insert(a.end(), b.begin(), b.end());
    CHECK(overall_report(per_task_report(a)).overall == doctest::Approx(0.6));
    auto one = overall_report(per_task_report(b));
    CHECK(one.overall == doctest::Approx(0.6));
    CHECK_THROWS_AS(overall_report(TaskReport{}), EvaluationError);
    auto c = with_accuracy(Task::paraphrasing, "p", 10, 10);
    b.insert(b.end(), c.begin(), c.end());
    auto micro = overall_report(per_task_report(b));
    auto macro = overall_report(per_task_report(b), Weighting::macro);
    CHECK(micro.overall == doctest::Approx(70.0 / 110.0));
    CHECK(macro.overall == doctest::Approx(0.8));
}

TEST_CASE("inferred group size for a target overall") {
    std::vector<AccuracyRow> known{{"Translation", 0.5779, 20148}, {"Summarization", 0.5849, 11994},
                                   {"Paraphrasing", 0.8303, 6000}};
    double n = solve_group_size(known, 0.9940, 0.7681);
    double overall = oracle::micro({{0.5779, 20148}, {0.5849, 11994}, {0.8303, 6000}, {0.9940, n}});
    CHECK(overall == doctest::Approx(0.7681).epsilon(1e-9));
    CHECK(n > 24000);
    CHECK(n < 26000);
    CHECK_THROWS_AS(solve_group_size(known, 0.5, 0.7681), EvaluationError);
}

TEST_CASE("rendering") {
    auto md = render_table1({}, Format::markdown);
    CHECK(md.find("| Dataset | Precision | Recall | Precision | Recall | Accuracy |") != std::string::npos);
    CHECK(std::count(md.begin(), md.end(), '\n') == 4);
    auto csv_empty = render_table1({}, Format::csv);
    CHECK(std::count(csv_empty.begin(), csv_empty.end(), '\n') == 1);

    std::vector<Table1Row> rows{{"lcsts", {0, 0, 5, 0}, class_metrics({0, 0, 5, 0})},
                                {"x", {7, 3, 2, 9}, class_metrics({7, 3, 2, 9})}};
    auto csv = render_table1(rows, Format::csv);
    CHECK(csv.find("lcsts,—,—,1.00,1.00,1.00") != std::string::npos);
    auto parsed = parse_csv_table(csv);
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[1].name == "x");
    auto m = rows[1].metrics;
    std::vector<std::optional<double>> expected{m.precision_human, m.recall_human, m.precision_model, m.recall_model,
                                                m.accuracy};
    for (size_t i = 0; i < expected.size(); ++i)
        CHECK(*parsed[1].values[i] == doctest::Approx(*expected[i]).epsilon(0.005));
    CHECK_FALSE(parsed[0].values[0].has_value());

    auto preds = with_accuracy(Task::qa, "hc3_en", 994, 1000);
    auto t2 = render_table2({{"enc-hc3", overall_report(per_task_report(preds))}}, Format::csv);
    CHECK(t2 == "Model,HC3,Translation,Summarization,Paraphrasing,Overall\nenc-hc3,99.40,—,—,—,99.40\n");
    auto back = parse_csv_table(t2);
    CHECK(*back[0].values[0] == doctest::Approx(99.40));
    CHECK(render_table2({}, Format::csv) == "Model,HC3,Translation,Summarization,Paraphrasing,Overall\n");
}

TEST_CASE("prediction dump round trip") {
    auto p = pred(Label::model, Label::human, Task::translation, "wmt");
    p.score = 0.25;
    auto j = to_json(p);
    CHECK(j.dump().rfind(R"({"sample_id")", 0) == 0);
    auto back = prediction_from_json(j);
    CHECK(back.sample_id == p.sample_id);
    CHECK(back.score == 0.25);
    CHECK(back.task == Task::translation);
    j["task"] = "poetry";
    CHECK_THROWS_AS(prediction_from_json(j), DataError);
}
