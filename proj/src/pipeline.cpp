#include "sidetect/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include "sidetect/analysis.hpp"
#include "sidetect/error.hpp"
#include "sidetect/io.hpp"

namespace sidetect::pipeline {

namespace fs = std::filesystem;
using detectors::DetectorKind;

namespace {

void say(const Log& log, const std::string& line) {
    if (log) log(line);
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::vector<generation::PromptTemplate> parse_templates(const json& j) {
    // Entries override the defaults task by task.
    auto templates = generation::default_templates();
    for (const auto& t : j) {
        auto tmpl = generation::make_template(t.value("template_id", std::string("custom")),
                                              parse_task(t.at("task").get<std::string>()),
                                              t.at("text_pattern").get<std::string>());
        auto it = std::find_if(templates.begin(), templates.end(),
                               [&](const auto& existing) { return existing.task == tmpl.task; });
        if (it != templates.end()) {
            *it = tmpl;
        } else {
            templates.push_back(tmpl);
        }
    }
    return templates;
}

json template_json(const generation::PromptTemplate& t) {
    return json{{"template_id", t.template_id}, {"task", to_string(t.task)}, {"text_pattern", t.text_pattern}};
}

}  // namespace

instruction::SchemaConfig RunConfig::schema() const {
    if (schema_path.empty()) return instruction::SchemaConfig::defaults();
    return instruction::load_schema_config(schema_path);
}

detectors::TrainConfig RunConfig::train_config() const {
    auto c = detector.train.value_or(detectors::TrainConfig{});
    if (!detector.train_seed_explicit) c.seed = seed;
    return c;
}

detectors::Stage1Config RunConfig::stage1_config() const {
    auto c = detector.stage1;
    if (!detector.stage1_seed_explicit) c.train.seed = seed;
    return c;
}

corpus::SplitSpec RunConfig::split_spec() const {
    auto s = split;
    if (!split_seed_explicit) s.seed = seed;
    return s;
}

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    RunConfig c;
    try {
        c.seed = j.value("seed", uint64_t{0});
        c.output_dir = fs::absolute(resolve(base_dir, j.value("output_dir", std::string("out")))).lexically_normal();

        if (!j.contains("corpora") || !j["corpora"].is_array() || j["corpora"].empty())
            throw ConfigError("config needs a non-empty 'corpora' list");
        for (const auto& decl : j["corpora"]) c.corpora.push_back(corpus::corpus_decl_from_json(decl, base_dir));

        if (!j.contains("split")) throw ConfigError("config needs a 'split' section");
        c.split = corpus::split_spec_from_json(j["split"]);
        c.split_seed_explicit = j["split"].contains("seed");

        if (auto it = j.find("generation"); it != j.end()) {
            auto& g = c.generation;
            g.endpoint = it->value("endpoint", g.endpoint);
            g.model_id = it->value("model_id", g.model_id);
            g.api_key_env = it->value("api_key_env", g.api_key_env);
            g.parallelism = it->value("parallelism", g.parallelism);
            g.rate_per_second = it->value("rate_per_second", g.rate_per_second);
            g.mock = it->value("mock", g.mock);
            g.keep_unpaired = it->value("keep_unpaired", g.keep_unpaired);
            if (it->contains("params")) g.params = (*it)["params"];
            if (it->contains("templates")) g.templates = parse_templates((*it)["templates"]);
        }

        if (auto it = j.find("detector"); it != j.end()) {
            auto& d = c.detector;
            if (it->contains("kind")) d.kind = detectors::parse_detector_kind((*it)["kind"].get<std::string>());
            if (it->contains("train")) {
                d.train = detectors::TrainConfig::from_json((*it)["train"]);
                d.train_seed_explicit = (*it)["train"].contains("seed");
            }
            if (auto s = it->find("statistical"); s != it->end()) {
                d.statistical.folds = s->value("folds", d.statistical.folds);
                d.statistical.discount = s->value("discount", d.statistical.discount);
                d.statistical.logistic.l2 = s->value("l2", d.statistical.logistic.l2);
                d.statistical.logistic.max_iterations =
                    s->value("max_iterations", d.statistical.logistic.max_iterations);
            }
            if (auto e = it->find("encoder"); e != it->end()) {
                d.encoder = detectors::EncoderOptions::from_json(*e);
                if (!d.encoder.init_from.empty() && d.encoder.init_from.is_relative())
                    d.encoder.init_from = base_dir / d.encoder.init_from;
            }
            if (auto s = it->find("stage1"); s != it->end()) {
                d.stage1 = detectors::Stage1Config::from_json(*s);
                d.stage1_seed_explicit = s->contains("train") && (*s)["train"].contains("seed");
            }
            d.free_generation = it->value("free_generation", d.free_generation);
        }
        c.run_id = j.value("run_id", std::string(detectors::to_string(c.detector.kind)));

        if (j.contains("schema")) c.schema_path = resolve(base_dir, j["schema"].get<std::string>());

        if (auto it = j.find("report"); it != j.end() && it->contains("formats")) {
            c.formats.clear();
            for (const auto& f : (*it)["formats"]) c.formats.push_back(evaluation::parse_format(f.get<std::string>()));
        }
        if (auto it = j.find("analysis"); it != j.end()) c.overlap_n = it->value("n", c.overlap_n);
    } catch (const ConfigError&) {
        throw;
    } catch (const DataError& e) {
        // Unknown task or language names.
        throw ConfigError(e.what());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid run config: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    auto c = parse_run_config(j, fs::absolute(path).parent_path());
    c.config_path = fs::absolute(path);
    return c;
}

void apply_overrides(RunConfig& config, const Overrides& o) {
    if (o.seed) config.seed = *o.seed;
    if (o.mock) config.generation.mock = *o.mock;
    if (o.kind) {
        // A run id derived from the old kind follows the new one.
        if (config.run_id == detectors::to_string(config.detector.kind)) config.run_id = detectors::to_string(*o.kind);
        config.detector.kind = *o.kind;
    }
    if (o.run_id) config.run_id = *o.run_id;
    if (!o.formats.empty()) config.formats = o.formats;
}

void validate_config(const RunConfig& c, bool needs_generation) {
    std::vector<std::string> problems;
    std::set<std::string> ids;
    std::set<Task> tasks;
    for (const auto& d : c.corpora) {
        if (!ids.insert(d.id).second) problems.push_back("duplicate corpus id '" + d.id + "'");
        if (!fs::is_regular_file(d.path)) problems.push_back("corpus '" + d.id + "': file not found: " + d.path.string());
        if (d.task == Task::translation && !d.extra.count("source_language") && d.source_language_field.empty())
            problems.push_back("corpus '" + d.id + "': translation needs source_language or source_language_field");
        tasks.insert(d.task);
    }
    size_t requested = 0;
    for (const auto& [id, counts] : c.split.per_corpus) {
        if (!ids.count(id)) problems.push_back("split names unknown corpus '" + id + "'");
        requested += counts.total();
    }
    if (requested == 0) problems.push_back("split requests zero pairs");
    for (Task t : tasks) {
        bool found = std::any_of(c.generation.templates.begin(), c.generation.templates.end(),
                                 [&](const auto& tmpl) { return tmpl.task == t; });
        if (!found) problems.push_back("no prompt template for task " + std::string(to_string(t)));
    }
    if (c.generation.parallelism < 1) problems.push_back("generation.parallelism must be >= 1");
    if (c.generation.rate_per_second < 0) problems.push_back("generation.rate_per_second must be >= 0");
    if (!c.schema_path.empty()) {
        if (!fs::is_regular_file(c.schema_path)) {
            problems.push_back("schema file not found: " + c.schema_path.string());
        } else {
            try {
                (void)c.schema();
            } catch (const std::exception& e) {
                problems.push_back(std::string("schema: ") + e.what());
            }
        }
    }
    if (!c.detector.encoder.init_from.empty() && !fs::exists(c.detector.encoder.init_from))
        problems.push_back("encoder.init_from not found: " + c.detector.encoder.init_from.string());
    if (c.run_id.empty() || c.run_id.find('/') != std::string::npos || c.run_id == "." || c.run_id == "..")
        problems.push_back("invalid run id '" + c.run_id + "'");
    if (c.formats.empty()) problems.push_back("report.formats is empty");
    if (c.overlap_n < 1) problems.push_back("analysis.n must be >= 1");
    try {
        c.train_config().validate();
    } catch (const ConfigError& e) {
        problems.push_back(e.what());
    }
    if (needs_generation && !c.generation.mock) {
        const char* key = std::getenv(c.generation.api_key_env.c_str());
        if (key == nullptr || *key == '\0')
            problems.push_back("environment variable " + c.generation.api_key_env + " is not set (or use --mock)");
    }
    if (!problems.empty()) {
        std::string msg = "invalid configuration";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }
}

std::string build_fingerprint(const RunConfig& c) {
    json j = json::object();
    json corpora = json::array();
    for (const auto& d : c.corpora) {
        json decl = corpus::to_json(d);
        decl.erase("path");  // content matters, location does not
        decl["content_sha256"] = io::sha256_hex(io::read_file(d.path));
        corpora.push_back(decl);
    }
    j["corpora"] = corpora;
    json split = json::object();
    const auto spec = c.split_spec();
    for (const auto& [id, counts] : spec.per_corpus)
        split[id] = json{{"train", counts.train}, {"val", counts.val}, {"test", counts.test}};
    j["split"] = json{{"seed", spec.seed}, {"per_corpus", split}};
    json templates = json::array();
    for (const auto& t : c.generation.templates) templates.push_back(template_json(t));
    j["generation"] = json{{"model_id", c.generation.effective_model_id()},
                           {"params", c.generation.params},
                           {"templates", templates},
                           {"keep_unpaired", c.generation.keep_unpaired}};
    return io::sha256_hex(j.dump());
}

BuildResult cmd_build(const RunConfig& c, const Log& log, generation::ChatClient* client, bool force) {
    validate_config(c, true);
    BuildResult result;
    const auto fingerprint = build_fingerprint(c);
    const auto dataset_dir = c.dataset_dir();

    if (!force && fs::exists(dataset_dir / "manifest.json")) {
        try {
            auto stored = corpus::load_dataset(dataset_dir);
            if (stored.manifest.fingerprint == fingerprint &&
                corpus::validate_manifest(stored.manifest, stored.samples).passed()) {
                result.up_to_date = true;
                result.samples = stored.samples.size();
                result.manifest = stored.manifest;
                say(log, "up-to-date: " + dataset_dir.string());
                return result;
            }
        } catch (const DataError&) {
            // Unreadable store: rebuild.
        }
    }

    corpus::CorpusRegistry registry(c.corpora);
    std::vector<PairRecord> pairs;
    for (const auto& d : c.corpora) {
        auto ingested = corpus::ingest_source_corpus(d);
        say(log, "ingested " + d.id + ": " + std::to_string(ingested.pairs.size()) + " pairs (" +
                     std::to_string(ingested.dropped_empty) + " dropped)");
        pairs.insert(pairs.end(), ingested.pairs.begin(), ingested.pairs.end());
    }
    result.pairs = pairs.size();

    const auto model_id = c.generation.effective_model_id();
    std::vector<generation::GenerationRequest> requests;
    requests.reserve(pairs.size());
    for (const auto& p : pairs) {
        const auto& tmpl = generation::template_for(c.generation.templates, p.task);
        requests.push_back({p.pair_id, generation::render_prompt(tmpl, p), model_id, c.generation.params});
    }

    std::unique_ptr<generation::ChatClient> owned;
    if (client == nullptr) {
        if (c.generation.mock) {
            owned = std::make_unique<generation::MockChatClient>();
        } else {
            owned = std::make_unique<generation::HttpChatClient>(
                generation::HttpClientConfig{c.generation.endpoint, c.generation.api_key_env});
        }
        client = owned.get();
    }
    generation::GenerationCache cache(c.cache_journal());
    generation::BatchOptions batch;
    batch.parallelism = c.generation.parallelism;
    batch.rate_per_second = c.generation.rate_per_second;
    const size_t calls_before = client->calls();
    auto records = generation::batch_generate(*client, cache, requests, batch);
    result.client_calls = client->calls() - calls_before;

    std::map<std::string, GenerationRecord> by_pair;
    for (const auto& r : records) {
        if (r.status == GenerationStatus::refused) ++result.refused;
        if (r.status == GenerationStatus::error) ++result.failed;
        by_pair[r.pair_id] = r;
    }
    say(log, "generated " + std::to_string(records.size()) + " (" + std::to_string(result.client_calls) +
                 " calls, " + std::to_string(result.refused) + " refused, " + std::to_string(result.failed) +
                 " failed)");
    if (result.failed > 0) {
        throw DataError(std::to_string(result.failed) +
                        " generations failed; successful ones are cached, rerun build to retry");
    }

    auto samples = corpus::assemble_detection_samples(pairs, by_pair, {c.generation.keep_unpaired});
    const auto spec = c.split_spec();
    auto split = corpus::split_corpus(samples, spec);
    auto manifest = corpus::build_manifest(split, model_id, generation::utc_timestamp(), spec.seed);
    manifest.fingerprint = fingerprint;

    if (fs::exists(dataset_dir)) fs::remove_all(dataset_dir);
    corpus::store_dataset(dataset_dir, split, manifest);

    auto stored = corpus::load_dataset(dataset_dir);
    auto report = corpus::validate_manifest(stored.manifest, stored.samples);
    if (!report.passed()) {
        std::string msg = "stored dataset does not match its manifest";
        for (const auto& m : report.mismatches) msg += "\n  - " + m;
        for (const auto& d : report.duplicate_ids) msg += "\n  - duplicate id " + d;
        throw DataError(msg);
    }
    result.samples = stored.samples.size();
    result.manifest = stored.manifest;
    say(log, "stored " + std::to_string(result.samples) + " samples in " + dataset_dir.string());
    return result;
}

namespace {

corpus::StoredDataset require_dataset(const RunConfig& c) {
    if (!fs::exists(c.dataset_dir() / "manifest.json"))
        throw DataError("no dataset at " + c.dataset_dir().string() + "; run build first");
    return corpus::load_dataset(c.dataset_dir());
}

// Stage-1 models are shared between runs with the same tuning setup.
std::unique_ptr<nn::Seq2SeqModel> stage1_model(const RunConfig& c, const instruction::SchemaConfig& schema,
                                               const Log& log) {
    const auto stage1 = c.stage1_config();
    const auto model_config = detectors::default_generative_model();
    json key{{"stage1", stage1.to_json()}, {"schema", instruction::to_json(schema)}, {"model", model_config.to_json()}};
    const auto dir = c.stage1_cache() / io::sha256_hex(key.dump()).substr(0, 16);
    if (fs::exists(dir / "model")) {
        say(log, "stage 1: reusing " + dir.string());
        return std::make_unique<nn::Seq2SeqModel>(nn::Seq2SeqModel::load(dir / "model"));
    }
    say(log, "stage 1: instruction tuning on toy tasks");
    auto tasks = detectors::default_toy_tasks(stage1.toy);
    auto base = detectors::make_base_model(tasks, stage1, schema, model_config);
    auto tuned = detectors::stage1_instruction_tune(std::move(base), tasks, stage1);
    json summary = json::object();
    for (const auto& [task, em] : tuned.held_out_exact_match) summary[task] = em;
    say(log, "stage 1: held-out exact match " + summary.dump());
    tuned.model->save(dir / "model");
    json log_rows = json::array();
    for (const auto& e : tuned.log) log_rows.push_back(e.to_json());
    io::write_file(dir / "stage1.json",
                   json{{"key", key}, {"held_out_exact_match", summary}, {"log", log_rows}}.dump(2) + "\n");
    return std::move(tuned.model);
}

}  // namespace

void record_best(const fs::path& run_dir, const detectors::Checkpoint& best) {
    json j{{"epoch", best.epoch},
           {"val_accuracy", best.val_accuracy ? json(*best.val_accuracy) : json(nullptr)},
           {"handle", (fs::relative(best.dir, run_dir) / "handle.json").generic_string()}};
    io::write_file(run_dir / "best.json", j.dump(2) + "\n");
}

fs::path best_handle_path(const RunConfig& c) {
    const auto best = c.run_dir() / "best.json";
    if (!fs::exists(best))
        throw EvaluationError("no trained detector for run '" + c.run_id + "' (" + best.string() + " missing)");
    try {
        return c.run_dir() / json::parse(io::read_file(best)).at("handle").get<std::string>();
    } catch (const json::exception& e) {
        throw EvaluationError(best.string() + ": " + e.what());
    }
}

TrainResult cmd_train(const RunConfig& c, const Log& log) {
    validate_config(c, false);
    auto dataset = require_dataset(c);
    auto train = corpus::filter_split(dataset.samples, Split::train);
    auto val = corpus::filter_split(dataset.samples, Split::val);
    if (train.empty()) throw DataError("train split is empty");

    TrainResult result;
    result.run_dir = c.run_dir();
    result.train_config = c.train_config();
    if (fs::exists(result.run_dir)) fs::remove_all(result.run_dir);
    fs::create_directories(result.run_dir);

    json snapshot{{"kind", detectors::to_string(c.detector.kind)},
                  {"run_id", c.run_id},
                  {"seed", c.seed},
                  {"dataset_fingerprint", dataset.manifest.fingerprint},
                  {"train", result.train_config.to_json()}};
    auto warn = [&](const std::string& m) { say(log, "warning: " + m); };
    detectors::TrainOptions options{result.run_dir, val, {}, warn};

    say(log, "training " + std::string(detectors::to_string(c.detector.kind)) + " on " +
                 std::to_string(train.size()) + " samples (" + std::to_string(val.size()) + " val)");
    switch (c.detector.kind) {
        case DetectorKind::statistical: {
            snapshot["statistical"] = json{{"folds", c.detector.statistical.folds},
                                           {"discount", c.detector.statistical.discount},
                                           {"l2", c.detector.statistical.logistic.l2}};
            auto r = detectors::train_statistical(train, val, result.run_dir, c.detector.statistical);
            result.checkpoints.push_back({1, detectors::epoch_dir(result.run_dir, 1), r.val_accuracy});
            break;
        }
        case DetectorKind::encoder: {
            snapshot["encoder"] = c.detector.encoder.to_json();
            auto r = detectors::train_encoder_classifier(train, result.train_config, c.detector.encoder, options);
            result.checkpoints = r.checkpoints;
            break;
        }
        case DetectorKind::generative: {
            const auto schema = c.schema();
            snapshot["stage1"] = c.stage1_config().to_json();
            snapshot["free_generation"] = c.detector.free_generation;
            auto lm = stage1_model(c, schema, log);
            auto data = detectors::instruction_samples(train, train, schema, c.seed);
            detectors::Stage2Options s2;
            s2.train = options;
            s2.schema = schema;
            s2.positive_pool = train;
            s2.prompt_seed = c.seed;
            s2.free_generation = c.detector.free_generation;
            auto r = detectors::stage2_finetune_detector(std::move(*lm), data, result.train_config, s2);
            result.checkpoints = r.checkpoints;
            break;
        }
    }
    io::write_file(result.run_dir / "config.json", snapshot.dump(2) + "\n");

    for (const auto& cp : result.checkpoints) {
        std::string line = "epoch " + std::to_string(cp.epoch);
        if (cp.val_accuracy) line += " val accuracy " + std::to_string(*cp.val_accuracy);
        say(log, line);
    }
    if (val.empty()) {
        // Nothing to select on: keep the last epoch.
        warn("validation split is empty; keeping the last checkpoint");
        result.best = result.checkpoints.back();
    } else {
        result.best = detectors::select_best_checkpoint(result.checkpoints);
    }
    record_best(result.run_dir, result.best);
    result.best_handle = best_handle_path(c);
    say(log, "best checkpoint: epoch " + std::to_string(result.best.epoch));
    return result;
}

namespace {

std::vector<evaluation::Prediction> load_predictions(const fs::path& path) {
    std::vector<evaluation::Prediction> out;
    for (const auto& row : io::read_jsonl(path)) out.push_back(evaluation::prediction_from_json(row));
    return out;
}

}  // namespace

EvaluateResult cmd_evaluate(const RunConfig& c, const fs::path& handle_path, const Log& log) {
    validate_config(c, false);
    const auto path = handle_path.empty() ? best_handle_path(c) : handle_path;
    if (!fs::exists(path)) throw EvaluationError("detector handle not found: " + path.string());
    auto dataset = require_dataset(c);
    auto test = corpus::filter_split(dataset.samples, Split::test);
    if (test.empty()) throw EvaluationError("test split is empty");

    auto detector = detectors::load_detector(detectors::DetectorHandle::load(path));
    EvaluateResult result;
    result.predictions.reserve(test.size());
    for (const auto& s : test) {
        auto out = detector->predict_sample(s);
        result.predictions.push_back({s.sample_id, s.label, out.label, out.score, s.task, s.source_corpus, s.language});
    }
    result.report = evaluation::overall_report(evaluation::per_task_report(result.predictions));

    const auto dir = c.report_dir();
    std::vector<json> rows;
    for (const auto& p : result.predictions) rows.push_back(evaluation::to_json(p));
    io::write_jsonl(dir / "predictions.jsonl", rows);
    result.written.push_back(dir / "predictions.jsonl");
    const auto table1 = evaluation::table1_rows(result.predictions);
    for (auto f : c.formats) {
        const std::string ext(evaluation::extension(f));
        io::write_file(dir / ("table1." + ext), evaluation::render_table1(table1, f));
        io::write_file(dir / ("table2." + ext), evaluation::render_table2({{c.run_id, result.report}}, f));
        result.written.push_back(dir / ("table1." + ext));
        result.written.push_back(dir / ("table2." + ext));
    }
    say(log, "test accuracy " + std::to_string(result.report.overall) + " over " +
                 std::to_string(result.report.total) + " samples; reports in " + dir.string());
    return result;
}

fs::path cmd_analyze(const RunConfig& c, const Log& log) {
    validate_config(c, false);
    auto dataset = require_dataset(c);
    auto summary = analysis::task_overlap_summary(dataset.samples, c.overlap_n);
    for (const auto& w : summary.warnings) say(log, "warning: " + w);
    const auto path = c.report_dir() / "overlap.md";
    io::write_file(path, analysis::render_overlap_markdown(summary));
    std::string ranking;
    for (Task t : summary.ranking) ranking += (ranking.empty() ? "" : " > ") + std::string(to_string(t));
    say(log, "overlap ranking: " + ranking + "; written to " + path.string());
    return path;
}

std::vector<fs::path> cmd_report(const RunConfig& c, const std::vector<std::string>& run_ids, const Log& log) {
    validate_config(c, false);
    std::vector<std::string> ids = run_ids;
    if (ids.empty() && fs::is_directory(c.reports_root())) {
        for (const auto& entry : fs::directory_iterator(c.reports_root())) {
            if (entry.is_directory() && fs::exists(entry.path() / "predictions.jsonl"))
                ids.push_back(entry.path().filename().string());
        }
        std::sort(ids.begin(), ids.end());
    }
    if (ids.empty()) throw EvaluationError("no stored predictions under " + c.reports_root().string());

    std::vector<evaluation::NamedReport> reports;
    std::vector<std::pair<std::string, std::vector<evaluation::Table1Row>>> tables;
    for (const auto& id : ids) {
        const auto path = c.reports_root() / id / "predictions.jsonl";
        if (!fs::exists(path)) throw EvaluationError("no predictions for run '" + id + "'");
        auto predictions = load_predictions(path);
        if (predictions.empty()) throw EvaluationError("empty prediction dump for run '" + id + "'");
        reports.push_back({id, evaluation::overall_report(evaluation::per_task_report(predictions))});
        tables.emplace_back(id, evaluation::table1_rows(predictions));
    }

    const auto dir = c.reports_root() / "summary";
    std::vector<fs::path> written;
    for (auto f : c.formats) {
        const std::string ext(evaluation::extension(f));
        for (const auto& [id, rows] : tables) {
            auto p = dir / ("table1." + id + "." + ext);
            io::write_file(p, evaluation::render_table1(rows, f));
            written.push_back(p);
        }
        auto p = dir / ("table2." + ext);
        io::write_file(p, evaluation::render_table2(reports, f));
        written.push_back(p);
    }
    say(log, "report over " + std::to_string(ids.size()) + " run(s) written to " + dir.string());
    return written;
}

int exit_code_for(const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) return err->exit_code();
    return 1;
}

json error_report(const std::exception& e) {
    const auto* err = dynamic_cast<const Error*>(&e);
    return json{{"error",
                 {{"type", err ? err->category() : "error"}, {"exit_code", exit_code_for(e)}, {"message", e.what()}}}};
}

}  // namespace sidetect::pipeline
