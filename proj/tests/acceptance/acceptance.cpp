// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "../common/oracles.hpp"
#include "../unit/test_util.hpp"
#include "sidetect/analysis.hpp"
#include "sidetect/corpus.hpp"
#include "sidetect/detectors/encoder_classifier.hpp"
#include "sidetect/detectors/generative.hpp"
#include "sidetect/detectors/statistical.hpp"
#include "sidetect/evaluation.hpp"
#include "sidetect/instruction.hpp"
#include "sidetect/io.hpp"
#include "sidetect/pipeline.hpp"
#include "sidetect/synthetic.hpp"
#include "sidetect/text.hpp"

using namespace sidetect;
using sidetect::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
    std::vector<std::string> failures;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            failures.push_back(what);
        }
    }
};

std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

// --- 1 ---
void metric_oracle(Outcome& out) {
    std::mt19937_64 rng(2024);
    size_t mismatches = 0;
    for (int i = 0; i < 200; ++i) {
        auto gp = oracle::random_predictions(rng, 50);
        auto got = evaluation::class_metrics(evaluation::confusion(gp));
        auto want = oracle::brute_force_metrics(gp);
        bool same = got.precision_human == want.precision_human && got.recall_human == want.recall_human &&
                    got.precision_model == want.precision_model && got.recall_model == want.recall_model &&
                    got.accuracy == want.accuracy;
        mismatches += !same;
    }
    out.require(mismatches == 0, std::to_string(mismatches) + " sets disagree with the counting oracle");
    out.detail << "200 random sets, " << mismatches << " mismatches";
}

// --- 2 ---
void table1_fixture(Outcome& out) {
    evaluation::ConfusionCounts counts{2982, 18, 1260, 1740};
    auto csv = evaluation::render_table1({{"CNN/DailyMail", counts, evaluation::class_metrics(counts)}},
                                         evaluation::Format::csv);
    auto rows = evaluation::parse_csv_table(csv);
    std::string rendered;
    if (rows.size() == 1) {
        for (const auto& v : rows[0].values) {
            if (!rendered.empty()) rendered += " / ";
            rendered += v ? fixed(*v, 2) : "-";
        }
    }
    const std::string expected = "0.63 / 0.99 / 0.99 / 0.42 / 0.71";
    out.require(rendered == expected, "rendered row '" + rendered + "'");
    out.detail << "rendered " << rendered;
}

// --- 3 ---
void weighting_probe(Outcome& out) {
    const std::vector<evaluation::AccuracyRow> known{
        {"Translation", 0.5779, 20148}, {"Summarization", 0.5849, 11994}, {"Paraphrasing", 0.8303, 6000}};
    const double hc3 = 0.9940;
    double n = evaluation::solve_group_size(known, hc3, 0.7681);
    auto micro_with = [&](double size, double a_hc3, double a_tr, double a_su, double a_pa) {
        return oracle::micro({{a_hc3, size}, {a_tr, 20148}, {a_su, 11994}, {a_pa, 6000}}) * 100.0;
    };
    const double rounded = std::round(n);
    const double overall = micro_with(rounded, hc3, 0.5779, 0.5849, 0.8303);
    out.require(std::fabs(overall - 76.81) <= 0.01, "overall " + fixed(overall, 4));
    const double macro = (99.40 + 57.79 + 58.49 + 83.03) / 4.0;
    // The same size applied to the other English rows of the table.
    const double plus = micro_with(rounded, 0.9884, 0.7136, 0.9921, 0.9653);
    const double inst = micro_with(rounded, 0.9952, 0.7559, 0.9949, 0.9787);
    out.detail << "inferred HC3 test size N = " << fixed(n, 2) << " (" << static_cast<long>(rounded)
               << "), micro overall " << fixed(overall, 3) << ", macro would give " << fixed(macro, 2)
               << "; same N reproduces " << fixed(plus, 2) << " (89.93) and " << fixed(inst, 2) << " (91.73)";
}

// --- 4 ---
std::map<std::string, std::string> dataset_files(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::string content = io::read_file(e.path());
        if (e.path().filename() == "manifest.json") {
            auto j = json::parse(content);
            j.erase("build_timestamp");
            content = j.dump();
        }
        files[e.path().filename().string()] = content;
    }
    return files;
}

void corpus_invariants(Outcome& out) {
    const fs::path source = SIDETECT_SOURCE_DIR;
    TempDir tmp;
    auto j = json::parse(io::read_file(source / "configs" / "fixture.json"));
    j["output_dir"] = (tmp / "a").string();
    auto config = pipeline::parse_run_config(j, source / "configs");
    config.generation.mock = true;

    auto built = pipeline::cmd_build(config);
    auto stored = corpus::load_dataset(config.dataset_dir());
    out.require(built.samples == 60, "expected 60 samples, got " + std::to_string(built.samples));

    // Disjointness: every pair sits in exactly one split.
    std::map<std::string, std::set<Split>> pair_splits;
    for (const auto& s : stored.samples) pair_splits[s.pair_id].insert(*s.split);
    size_t straddling = 0;
    for (const auto& [_, splits] : pair_splits) straddling += splits.size() != 1;
    out.require(straddling == 0, std::to_string(straddling) + " pairs span splits");

    // Balance, counted per (corpus, split) straight from the stored files.
    std::map<std::pair<std::string, std::string>, std::pair<size_t, size_t>> counted;
    for (const auto& e : fs::directory_iterator(config.dataset_dir())) {
        auto name = e.path().filename().string();
        if (name == "manifest.json") continue;
        auto stem = e.path().stem().string();  // corpus.split
        auto dot = stem.rfind('.');
        auto key = std::make_pair(stem.substr(0, dot), stem.substr(dot + 1));
        for (const auto& row : io::read_jsonl(e.path())) {
            if (row.at("label") == "human") {
                ++counted[key].first;
            } else {
                ++counted[key].second;
            }
        }
    }
    size_t unbalanced = 0;
    size_t human = 0, model = 0;
    for (const auto& [key, hm] : counted) {
        unbalanced += hm.first != hm.second;
        human += hm.first;
        model += hm.second;
    }
    out.require(unbalanced == 0 && human == model, "class balance broken");

    // Manifest cells against the counted files.
    size_t cell_mismatch = 0;
    for (const auto& cell : stored.manifest.cells) {
        auto it = counted.find({cell.source_corpus, std::string(to_string(cell.split))});
        size_t actual = it == counted.end() ? 0 : it->second.first + it->second.second;
        cell_mismatch += actual != cell.count;
    }
    out.require(cell_mismatch == 0 && stored.manifest.cells.size() == counted.size() && stored.manifest.total == 60,
                "manifest disagrees with storage");
    out.require(corpus::validate_manifest(stored.manifest, stored.samples).passed(), "validate_manifest failed");

    // Rebuild from the warm cache, then a cold rebuild elsewhere.
    auto before = dataset_files(config.dataset_dir());
    generation::MockChatClient counting;
    pipeline::cmd_build(config, {}, &counting, true);
    out.require(counting.calls() == 0, "warm rebuild called the generator");
    out.require(dataset_files(config.dataset_dir()) == before, "warm rebuild differs");
    auto cold = config;
    cold.output_dir = tmp / "b";
    pipeline::cmd_build(cold);
    out.require(dataset_files(cold.dataset_dir()) == before, "cold rebuild differs");
    out.require(pipeline::cmd_build(config).up_to_date, "rerun not reported up-to-date");

    out.detail << stored.samples.size() << " samples, " << human << " human / " << model << " model, "
               << pair_splits.size() << " pairs in " << counted.size() << " cells, rebuilds byte-identical";
}

// --- 5 ---
void statistical_sanity(Outcome& out) {
    auto train = synthetic::rank_biased_corpus(200, 11, "train");
    auto test = synthetic::rank_biased_corpus(200, 12, "test");
    TempDir tmp;
    auto r = detectors::train_statistical(train, {}, tmp.path());
    double acc = detectors::accuracy(r.detector, test);
    out.require(train.size() == 400, "training set size");
    out.require(acc >= 0.95, "held-out accuracy " + fixed(acc, 4));
    out.detail << "400 training samples, held-out accuracy " << fixed(acc, 4) << " on " << test.size();
}

// --- 6 ---
void directional_gap(Outcome& out) {
    for (uint64_t seed = 0; seed < 3; ++seed) {
        auto qa = synthetic::task_family_corpus(Task::qa, 200, seed, "qa");
        auto pa = synthetic::task_family_corpus(Task::paraphrasing, 200, seed, "pa");
        auto pa_test = synthetic::task_family_corpus(Task::paraphrasing, 100, seed + 100, "pat");
        detectors::TrainConfig cfg{4, 1e-3, 16, seed, 64};
        TempDir tmp;

        detectors::TrainOptions only_qa;
        only_qa.run_dir = tmp / "qa";
        auto r1 = detectors::train_encoder_classifier(qa, cfg, {}, only_qa);
        double a1 = detectors::accuracy(*detectors::load_detector(r1.final_handle), pa_test);

        auto both = qa;
        both.insert(both.end(), pa.begin(), pa.end());
        detectors::TrainOptions mixed;
        mixed.run_dir = tmp / "both";
        auto r2 = detectors::train_encoder_classifier(both, cfg, {}, mixed);
        double a2 = detectors::accuracy(*detectors::load_detector(r2.final_handle), pa_test);

        double gap = (a2 - a1) * 100.0;
        out.require(gap >= 15.0, "seed " + std::to_string(seed) + " gap " + fixed(gap, 1));
        out.detail << (seed ? "; " : "") << "seed " << seed << ": qa-only " << fixed(a1 * 100, 1) << ", qa+para "
                   << fixed(a2 * 100, 1) << ", gap " << fixed(gap, 1);
    }
}

// --- 7 ---
std::string random_text(std::mt19937_64& rng) {
    static const std::vector<std::string> words{"the", "river", "model", "human", "Output:", "答案", "模型", "人类",
                                                "zq7", "lab3", "w12", "!!", "Definition:", "—", "résumé", "42"};
    std::uniform_int_distribution<int> len(0, 40);
    std::uniform_int_distribution<size_t> pick(0, words.size() - 1);
    std::string s;
    int n = len(rng);
    for (int i = 0; i < n; ++i) s += (i ? " " : "") + words[pick(rng)];
    return s;
}

void generative_detector(Outcome& out) {
    using namespace detectors;
    TempDir tmp;
    auto schema = instruction::SchemaConfig::defaults();
    auto tasks = default_toy_tasks();
    Stage1Config stage1;
    auto t0 = std::chrono::steady_clock::now();
    auto tuned = stage1_instruction_tune(make_base_model(tasks, stage1, schema), tasks, stage1);
    double stage1_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    tuned.model->save(tmp / "stage1");

    // Totality of constrained decoding over random prompts.
    auto model = std::make_shared<const nn::Seq2SeqModel>(nn::Seq2SeqModel::load(tmp / "stage1"));
    GenerativeDetector detector(model, schema, std::make_shared<const std::vector<Sample>>(), 0);
    std::mt19937_64 rng(77);
    std::bernoulli_distribution coin(0.5);
    size_t valid = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<Sample> pool;
        Language lang = coin(rng) ? Language::en : Language::zh;
        for (int k = 0; k < 4; ++k) {
            Sample s;
            s.pair_id = "p" + std::to_string(k);
            s.sample_id = s.pair_id + (k % 2 ? "#h" : "#m");
            s.label = k % 2 ? Label::human : Label::model;
            s.language = lang;
            s.text = random_text(rng);
            pool.push_back(s);
        }
        Sample target;
        target.sample_id = target.pair_id = "t" + std::to_string(i);
        target.language = lang;
        target.text = random_text(rng);
        try {
            auto prompt = instruction::build_prompt(schema, pool, static_cast<uint64_t>(i), target);
            auto o = detector.predict(DetectorInput{prompt});
            bool label_ok = o.label == Label::human || o.label == Label::model;
            valid += label_ok && std::isfinite(o.score) && o.score >= 0.0 && o.score <= 1.0;
        } catch (const std::exception&) {
        }
    }
    out.require(valid == 1000, std::to_string(1000 - valid) + " prompts without a valid label");

    // Memorization of 64 separable samples with the default TrainConfig.
    auto train = synthetic::separable_corpus(32, 1, "sep");
    auto pool = synthetic::separable_corpus(8, 2, "pool");
    auto data = instruction_samples(train, pool, schema, 0);
    Stage2Options options;
    options.train.run_dir = tmp / "stage2";
    options.schema = schema;
    options.positive_pool = pool;
    TrainConfig defaults;
    out.require(defaults.epochs == 4 && defaults.learning_rate == 1e-4 && defaults.batch_size == 32,
                "default TrainConfig changed");
    auto r = stage2_finetune_detector(nn::Seq2SeqModel::load(tmp / "stage1"), data, defaults, options);
    auto reloaded = load_detector(r.final_handle);
    size_t correct = 0;
    for (const auto& d : data) correct += reloaded->predict(DetectorInput{d.prompt}).label == d.gold;
    out.require(data.size() == 64, "instruction set size");
    out.require(correct == data.size(), "train-label accuracy " + std::to_string(correct) + "/64");

    std::string em;
    for (const auto& [task, v] : tuned.held_out_exact_match) em += (em.empty() ? "" : ", ") + task + " " + fixed(v, 2);
    out.detail << valid << "/1000 valid labels; stage 1 " << tuned.log.size() << " epochs in " << fixed(stage1_secs, 0)
               << "s (" << em << "); stage 2 {4, 1e-4, 32} train-label accuracy " << correct << "/" << data.size();
}

// --- 8 ---
void instruction_schema(Outcome& out) {
    auto cfg = instruction::SchemaConfig::defaults();
    std::vector<Sample> pool;
    for (int i = 0; i < 60; ++i) {
        for (Label l : kAllLabels) {
            Sample s;
            s.pair_id = "c-" + std::to_string(i);
            s.sample_id = s.pair_id + (l == Label::human ? "#h" : "#m");
            s.label = l;
            s.language = i % 3 == 0 ? Language::zh : Language::en;
            s.text = std::string(l == Label::human ? "person " : "machine ") + std::to_string(i);
            pool.push_back(s);
        }
    }
    size_t bad = 0;
    for (int i = 0; i < 10000; ++i) {
        const Sample& target = pool[static_cast<size_t>(i) % pool.size()];
        auto p = instruction::build_prompt(cfg, pool, static_cast<uint64_t>(i / 100), target);
        size_t h = 0, m = 0;
        for (const auto& pos : p.positives) (pos.output_label == Label::human ? h : m) += 1;
        // The assembled text carries the same two labels.
        auto parsed = instruction::parse_layout(cfg.layout, p.assembled);
        std::multiset<std::string> outputs;
        for (const auto& [_, o] : parsed.examples) outputs.insert(o);
        std::multiset<std::string> expected{instruction::label_surface(cfg, Label::human, target.language),
                                            instruction::label_surface(cfg, Label::model, target.language)};
        bad += !(h == 1 && m == 1 && p.positives.size() == 2 && outputs == expected);
    }
    out.require(bad == 0, std::to_string(bad) + " prompts without exactly one positive per label");

    auto def = instruction::definition_for(cfg, Language::en);
    std::vector<instruction::PositiveExample> pos{
        {"The results indicate a significant improvement overall.", Label::model},
        {"honestly no idea, it broke again lol", Label::human}};
    auto golden = instruction::assemble_prompt(def, pos, "Water boils at 100 degrees at sea level.");
    bool golden_ok = golden.assembled == io::read_file(testing::fixture("golden_instruction_prompt.txt"));
    out.require(golden_ok, "golden layout mismatch");
    out.detail << "10000 draws, " << bad << " violations; golden layout " << (golden_ok ? "matches" : "differs");
}

// --- 9 ---
void overlap_analysis(Outcome& out) {
    auto samples = synthetic::task_family_corpus(Task::qa, 200, 0, "qa");
    auto pa = synthetic::task_family_corpus(Task::paraphrasing, 200, 0, "pa");
    auto tr = synthetic::task_family_corpus(Task::translation, 200, 0, "tr");
    samples.insert(samples.end(), pa.begin(), pa.end());
    samples.insert(samples.end(), tr.begin(), tr.end());
    auto summary = analysis::task_overlap_summary(samples, 2);
    out.require(!summary.ranking.empty() && summary.ranking[0] == Task::translation, "translation not ranked first");

    // Hand-computed values.
    using analysis::lcs_ratio;
    using analysis::ngram_overlap;
    out.require(ngram_overlap("the cat sat", "the cat ran", 2) == 0.5, "bigram example");
    out.require(ngram_overlap("a a a", "a a", 1) == 2.0 / 3.0, "clipped unigram example");
    out.require(lcs_ratio("a b c d", "a x c d") == 0.75, "lcs example");
    out.require(lcs_ratio("", "a b") == 0.0, "empty lcs example");
    out.require(ngram_overlap("猫坐着", "猫坐下", 1, Language::zh) == 2.0 / 3.0, "chinese unigram example");

    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> len(0, 12), tok(0, 4);
    auto tokens = [&] {
        std::vector<std::string> v(static_cast<size_t>(len(rng)));
        for (auto& t : v) t = std::string(1, static_cast<char>('a' + tok(rng)));
        return v;
    };
    size_t violations = 0;
    for (int i = 0; i < 2000; ++i) {
        auto a = tokens(), b = tokens();
        double l = lcs_ratio(a, b);
        violations += l != lcs_ratio(b, a) || l < 0.0 || l > 1.0;
        violations += analysis::lcs_length(a, b) != oracle::lcs_table(a, b);
        for (int n = 1; n <= 3; ++n) {
            double o = ngram_overlap(a, b, n);
            violations += o < 0.0 || o > 1.0;
            violations += analysis::ngram_intersection(a, b, n) != analysis::ngram_intersection(b, a, n);
        }
    }
    out.require(violations == 0, std::to_string(violations) + " property violations");

    out.detail << "ranking";
    for (Task t : summary.ranking) {
        auto it = std::find_if(summary.per_task.begin(), summary.per_task.end(),
                               [&](const auto& s) { return s.name == to_string(t); });
        out.detail << " " << to_string(t) << "=" << (it == summary.per_task.end() ? "?" : fixed(it->ngram_mean, 3));
    }
    out.detail << "; 2000 random pairs, " << violations << " property violations";
}

struct Criterion {
    int id;
    std::string name;
    std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {1, "metric oracle equivalence", metric_oracle},
        {2, "per-corpus metric row arithmetic", table1_fixture},
        {3, "overall accuracy weighting probe", weighting_probe},
        {4, "corpus invariants on the mock fixture build", corpus_invariants},
        {5, "statistical detector sanity", statistical_sanity},
        {6, "directional QA-only vs mixed-task gap", directional_gap},
        {7, "generative detector totality and memorization", generative_detector},
        {8, "instruction schema positives and golden layout", instruction_schema},
        {9, "overlap analysis ranking and metric properties", overlap_analysis},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        Outcome out;
        auto start = std::chrono::steady_clock::now();
        try {
            c.run(out);
        } catch (const std::exception& e) {
            out.require(false, std::string("exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " ["
                  << out.detail.str() << "] (" << fixed(secs, 1) << "s)";
        for (const auto& f : out.failures) std::cout << " | " << f;
        std::cout << std::endl;
        failed += !out.pass;
    }
    return failed == 0 ? 0 : 1;
}
