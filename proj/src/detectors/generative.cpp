#include "sidetect/detectors/generative.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "sidetect/text.hpp"

namespace sidetect::detectors {

namespace {

std::string pick_words(std::mt19937_64& rng, size_t n, const std::vector<std::string>& from) {
    std::string s;
    for (size_t i = 0; i < n; ++i) {
        if (i) s += ' ';
        s += from[rng() % from.size()];
    }
    return s;
}

size_t between(std::mt19937_64& rng, size_t lo, size_t hi) { return lo + rng() % (hi - lo + 1); }

std::string reversed(const std::string& s) {
    auto t = text::whitespace_tokens(s);
    std::reverse(t.begin(), t.end());
    return text::join(t, " ");
}

std::pair<std::string, std::string> two_labels(std::mt19937_64& rng, const std::vector<std::string>& labels) {
    std::string a = labels[rng() % labels.size()], b;
    do b = labels[rng() % labels.size()];
    while (b == a);
    return {a, b};
}

// Mentions the candidate labels in the definition zero, one or two times
// each, in random order, so that copying a label is not confused by
// definitions that name the answers (as the detection definition does).
std::string with_choices(const std::string& definition, std::mt19937_64& rng, std::string a, std::string b) {
    if (rng() % 2) std::swap(a, b);
    switch (rng() % 3) {
        case 0:
            return definition;
        case 1:
            return definition + " Answer '" + a + "' or '" + b + "'.";
        default:
            return "Decide whether the input goes with " + a + " or with " + b + ". " + definition + " Answer '" +
                   b + "' or '" + a + "'.";
    }
}

std::vector<std::string> pool_words(const ToyTaskOptions& o) {
    std::vector<std::string> out;
    for (size_t i = 0; i < o.word_pool; ++i) out.push_back("w" + std::to_string(i));
    return out;
}

std::vector<std::string> label_words(const ToyTaskOptions& o) {
    std::vector<std::string> out;
    for (size_t i = 0; i < o.label_pool; ++i) out.push_back("lab" + std::to_string(i));
    return out;
}

}  // namespace

std::vector<std::string> toy_words(const ToyTaskOptions& options) {
    auto out = pool_words(options);
    auto labels = label_words(options);
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

ToyTask toy_task(std::string_view name, const ToyTaskOptions& options) {
    if (options.word_pool < 50 || options.label_pool < 2) throw ConfigError("toy task pools are too small");
    auto pool = pool_words(options);
    auto labels = label_words(options);
    if (name == "copy") {
        return {"copy", [pool](std::mt19937_64& r) {
                    auto a = pick_words(r, between(r, 3, 6), pool), b = pick_words(r, between(r, 3, 6), pool);
                    auto q = pick_words(r, between(r, 3, 6), pool);
                    return ToyInstance{"Copy the input words exactly.", {{a, a}, {b, b}}, q, q};
                }};
    }
    if (name == "reverse-words") {
        return {"reverse-words", [pool](std::mt19937_64& r) {
                    auto a = pick_words(r, between(r, 3, 5), pool), b = pick_words(r, between(r, 3, 5), pool);
                    auto q = pick_words(r, between(r, 3, 5), pool);
                    return ToyInstance{"Write the input words in reverse order.", {{a, reversed(a)}, {b, reversed(b)}},
                                       q, reversed(q)};
                }};
    }
    if (name == "label-parity") {
        return {"label-parity", [pool, labels](std::mt19937_64& r) {
                    auto [la, lb] = two_labels(r, labels);
                    size_t even = 2 * between(r, 2, 4), odd = 2 * between(r, 1, 3) + 1;
                    auto ea = pick_words(r, even, pool), eb = pick_words(r, odd, pool);
                    bool want_even = r() % 2;
                    auto q = pick_words(r, want_even ? 2 * between(r, 1, 4) : 2 * between(r, 1, 3) + 1, pool);
                    std::vector<std::pair<std::string, std::string>> ex{{ea, la}, {eb, lb}};
                    if (r() % 2) std::swap(ex[0], ex[1]);
                    return ToyInstance{with_choices("Answer with the label of the example whose word count has the same parity as the input.", r, la, lb),
                                       ex, q, want_even ? la : lb};
                }};
    }
    if (name == "label-match") {
        return {"label-match", [pool, labels](std::mt19937_64& r) {
                    auto shuffled = pool;
                    std::shuffle(shuffled.begin(), shuffled.end(), r);
                    // Topics range from small (heavy overlap) to large (often
                    // a single shared word); one shared word is guaranteed.
                    size_t ta = between(r, 3, 16), tb = between(r, 3, 16);
                    std::vector<std::string> A(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(ta));
                    std::vector<std::string> B(shuffled.begin() + static_cast<std::ptrdiff_t>(ta),
                                               shuffled.begin() + static_cast<std::ptrdiff_t>(ta + tb));
                    auto [la, lb] = two_labels(r, labels);
                    auto ea = pick_words(r, between(r, 4, 10), A), eb = pick_words(r, between(r, 4, 10), B);
                    bool pick_a = r() % 2;
                    auto words = text::whitespace_tokens(pick_words(r, between(r, 3, 8), pick_a ? A : B));
                    auto shared = text::whitespace_tokens(pick_a ? ea : eb);
                    words[r() % words.size()] = shared[r() % shared.size()];
                    auto q = text::join(words, " ");
                    return ToyInstance{with_choices("Answer with the label of the example whose words the input shares.", r, la, lb),
                                       {{ea, la}, {eb, lb}}, q, pick_a ? la : lb};
                }};
    }
    if (name == "label-lookup") {
        return {"label-lookup", [pool, labels](std::mt19937_64& r) {
                    auto [la, lb] = two_labels(r, labels);
                    auto ea = pick_words(r, between(r, 3, 8), pool), eb = pick_words(r, between(r, 3, 8), pool);
                    bool pick_a = r() % 2;
                    return ToyInstance{with_choices("Answer with the label of the example whose input equals the input.", r, la, lb),
                                       {{ea, la}, {eb, lb}}, pick_a ? ea : eb, pick_a ? la : lb};
                }};
    }
    if (name == "first-word") {
        return {"first-word", [pool](std::mt19937_64& r) {
                    auto a = pick_words(r, between(r, 3, 6), pool), b = pick_words(r, between(r, 3, 6), pool);
                    auto q = pick_words(r, between(r, 3, 6), pool);
                    auto first = [](const std::string& s) { return text::whitespace_tokens(s).at(0); };
                    return ToyInstance{"Write only the first word of the input.", {{a, first(a)}, {b, first(b)}}, q,
                                       first(q)};
                }};
    }
    throw ConfigError("unknown toy task '" + std::string(name) + "'");
}

std::vector<ToyTask> default_toy_tasks(const ToyTaskOptions& options) {
    std::vector<ToyTask> out;
    for (const char* n : {"copy", "reverse-words", "label-lookup", "label-match"}) out.push_back(toy_task(n, options));
    return out;
}

void validate_instance(const ToyInstance& instance) {
    if (text::trim(instance.definition).empty()) throw DataError("schema violation: empty task definition");
    if (instance.examples.size() != 2) throw DataError("schema violation: expected exactly two positive examples");
    if (text::trim(instance.output).empty()) throw DataError("schema violation: empty output");
}

std::string assemble(const ToyInstance& instance, const instruction::Layout& layout) {
    return instruction::assemble_layout(layout, instance.definition, instance.examples, instance.input);
}

nn::TransformerConfig default_generative_model() {
    nn::TransformerConfig c;
    c.token_match_bias = true;
    c.match_bias_init = 8.0f;
    c.relative_buckets = 32;
    return c;
}

json Stage1Config::to_json() const {
    return json{{"train", train.to_json()},
                {"instances_per_task", instances_per_task},
                {"held_out_per_task", held_out_per_task},
                {"target_exact_match", target_exact_match},
                {"settle_epochs", settle_epochs},
                {"resample_each_epoch", resample_each_epoch},
                {"word_pool", toy.word_pool},
                {"label_pool", toy.label_pool}};
}

Stage1Config Stage1Config::from_json(const json& j) {
    Stage1Config c;
    if (j.contains("train")) {
        json merged = c.train.to_json();
        merged.update(j["train"]);
        c.train = TrainConfig::from_json(merged);
    }
    c.instances_per_task = j.value("instances_per_task", c.instances_per_task);
    c.held_out_per_task = j.value("held_out_per_task", c.held_out_per_task);
    c.target_exact_match = j.value("target_exact_match", c.target_exact_match);
    c.settle_epochs = j.value("settle_epochs", c.settle_epochs);
    if (c.settle_epochs < 0) throw ConfigError("settle_epochs must be non-negative");
    c.resample_each_epoch = j.value("resample_each_epoch", c.resample_each_epoch);
    c.toy.word_pool = j.value("word_pool", c.toy.word_pool);
    c.toy.label_pool = j.value("label_pool", c.toy.label_pool);
    if (c.instances_per_task == 0) throw ConfigError("instances_per_task must be positive");
    return c;
}

nn::Seq2SeqModel make_base_model(const std::vector<ToyTask>& tasks, const Stage1Config& config,
                                 const instruction::SchemaConfig& schema, const nn::TransformerConfig& model) {
    auto delimiters = config.layout.delimiters(2);
    nn::PromptTokenizer tokenizer(delimiters);
    nn::Vocabulary vocab;
    for (const auto& w : toy_words(config.toy)) vocab.add(w);
    std::mt19937_64 rng(io::stable_hash64("vocab:" + std::to_string(config.train.seed)));
    for (const auto& task : tasks) {
        for (int i = 0; i < 20; ++i)
            for (const auto& tok : tokenizer.tokenize(assemble(task.sample(rng), config.layout))) vocab.add(tok.text);
    }
    // Detection schema text, so stage 2 starts with these tokens in place.
    for (const auto& [lang, def] : schema.definitions)
        for (const auto& tok : tokenizer.tokenize(def)) vocab.add(tok.text);
    for (const auto& [lang, s] : schema.surfaces)
        for (const auto& surface : {s.human, s.model})
            for (const auto& tok : text::model_tokens(surface)) vocab.add(tok);
    vocab.enable_hash_buckets(256);
    return nn::Seq2SeqModel(model, std::move(vocab), delimiters, config.train.seed);
}

std::string generate_text(const nn::Seq2SeqModel& model, std::string_view prompt, int max_tokens) {
    return model.decode(model.greedy_decode(model.encode_source(prompt), max_tokens));
}

double exact_match(const nn::Seq2SeqModel& model, const std::vector<ToyInstance>& instances,
                   const instruction::Layout& layout) {
    if (instances.empty()) return 0.0;
    size_t ok = 0;
    for (const auto& inst : instances) {
        auto expected = text::join(text::model_tokens(inst.output), " ");
        ok += generate_text(model, assemble(inst, layout), 16) == expected;
    }
    return static_cast<double>(ok) / static_cast<double>(instances.size());
}

Stage1Result stage1_instruction_tune(nn::Seq2SeqModel base_lm, const std::vector<ToyTask>& tasks,
                                     const Stage1Config& config) {
    if (tasks.size() < 2) throw DataError("stage-1 instruction tuning needs at least two distinct tasks");
    for (size_t i = 0; i < tasks.size(); ++i)
        for (size_t j = i + 1; j < tasks.size(); ++j)
            if (tasks[i].name == tasks[j].name) throw DataError("duplicate stage-1 task '" + tasks[i].name + "'");
    config.train.validate();

    auto model = std::make_unique<nn::Seq2SeqModel>(std::move(base_lm));
    struct Item {
        nn::EncodedInput source;
        std::vector<int> target;
    };
    std::vector<Item> items;
    auto materialize = [&](uint64_t salt) {
        items.clear();
        for (size_t t = 0; t < tasks.size(); ++t) {
            std::mt19937_64 rng(io::stable_hash64("stage1:" + std::to_string(config.train.seed) + ":" + tasks[t].name +
                                                  ":" + std::to_string(salt)));
            for (size_t i = 0; i < config.instances_per_task; ++i) {
                auto inst = tasks[t].sample(rng);
                validate_instance(inst);
                items.push_back({model->encode_source(assemble(inst, config.layout)), model->encode_target(inst.output)});
            }
        }
    };
    std::map<std::string, std::vector<ToyInstance>> held_out;
    for (const auto& task : tasks) {
        std::mt19937_64 rng(io::stable_hash64("heldout:" + std::to_string(config.train.seed) + ":" + task.name));
        for (size_t i = 0; i < config.held_out_per_task; ++i) held_out[task.name].push_back(task.sample(rng));
    }
    materialize(0);

    Stage1Result result;
    nn::Adam optimizer;
    bool reached = false;
    int reached_at = 0;
    run_training_loop(
        model->params(), optimizer, items.size(), config.train, 1,
        [&](nn::Tape& t, size_t i) { return model->loss(t, items[i].source, items[i].target); },
        [&](int epoch, double loss) {
            EpochLog entry{epoch, loss, std::nullopt};
            bool evaluate = config.held_out_per_task > 0 &&
                            ((config.target_exact_match <= 1.0 && !reached) || epoch == config.train.epochs ||
                             epoch == reached_at + config.settle_epochs);
            if (evaluate) {
                double sum = 0.0;
                bool all = true;
                for (const auto& task : tasks) {
                    double em = exact_match(*model, held_out[task.name], config.layout);
                    result.held_out_exact_match[task.name] = em;
                    sum += em;
                    all = all && em >= config.target_exact_match;
                }
                entry.val_accuracy = sum / static_cast<double>(tasks.size());
                if (all && !reached) {
                    reached = true;
                    reached_at = epoch;
                }
            }
            result.log.push_back(entry);
        },
        [&](int epoch) {
            if (config.resample_each_epoch && epoch > 1) materialize(static_cast<uint64_t>(epoch));
        },
        [&](int epoch) { return reached && epoch >= reached_at + config.settle_epochs; });
    result.model = std::move(model);
    return result;
}

// --- Generative detector ---

GenerativeDetector::GenerativeDetector(std::shared_ptr<const nn::Seq2SeqModel> model, instruction::SchemaConfig schema,
                                       std::shared_ptr<const std::vector<Sample>> pool, uint64_t prompt_seed,
                                       bool free_generation)
    : model_(std::move(model)),
      schema_(std::move(schema)),
      pool_(std::move(pool)),
      prompt_seed_(prompt_seed),
      free_generation_(free_generation) {}

instruction::InstructionPrompt GenerativeDetector::prompt_for(const Sample& sample) const {
    if (!pool_ || pool_->empty()) throw DataError("generative detector has no positive-example pool");
    return instruction::build_prompt(schema_, *pool_, prompt_seed_, sample);
}

DetectorOutput GenerativeDetector::predict(const DetectorInput& input) const {
    const auto* prompt = std::get_if<instruction::InstructionPrompt>(&input);
    if (!prompt) throw KindMismatch("generative detector expects an instruction prompt, got raw text");
    const Language lang = prompt->definition.language;
    auto source = model_->encode_source(prompt->assembled);
    auto scores = model_->score_candidates(
        source, {model_->encode_target(instruction::label_surface(schema_, Label::human, lang)),
                 model_->encode_target(instruction::label_surface(schema_, Label::model, lang))});
    double p_model = 1.0 / (1.0 + std::exp(scores[0] - scores[1]));
    Label label = scores[1] > scores[0] ? Label::model : Label::human;
    if (free_generation_) {
        try {
            label = instruction::normalize_label(model_->decode(model_->greedy_decode(source, 8)), schema_);
        } catch (const instruction::UnparseableLabel&) {
            // keep the scored decision
        }
    }
    return {label, p_model};
}

DetectorOutput GenerativeDetector::predict_sample(const Sample& sample) const {
    return predict(DetectorInput{prompt_for(sample)});
}

void GenerativeDetector::save(const std::filesystem::path& dir, const std::string& pool_file) const {
    std::filesystem::create_directories(dir);
    model_->save(dir / "model");
    io::write_file(dir / "schema.json", instruction::to_json(schema_).dump(2) + "\n");
    io::write_file(dir / "generative.json",
                   json{{"prompt_seed", prompt_seed_}, {"free_generation", free_generation_}, {"positives", pool_file}}
                           .dump(2) + "\n");
}

GenerativeDetector GenerativeDetector::load(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "generative.json")) throw DataError("missing generative.json in " + dir.string());
    json meta;
    try {
        meta = json::parse(io::read_file(dir / "generative.json"));
    } catch (const json::parse_error& e) {
        throw DataError(std::string("generative.json: ") + e.what());
    }
    auto model = std::make_shared<const nn::Seq2SeqModel>(nn::Seq2SeqModel::load(dir / "model"));
    auto schema = instruction::load_schema_config(dir / "schema.json");
    auto pool = std::make_shared<std::vector<Sample>>();
    auto pool_path = dir / meta.at("positives").get<std::string>();
    if (!std::filesystem::exists(pool_path)) throw DataError("missing positive pool " + pool_path.string());
    for (const auto& j : io::read_jsonl(pool_path)) pool->push_back(sample_from_json(j));
    return GenerativeDetector(model, schema, pool, meta.value("prompt_seed", uint64_t{0}),
                              meta.value("free_generation", false));
}

std::vector<InstructionSample> instruction_samples(const std::vector<Sample>& samples, const std::vector<Sample>& pool,
                                                   const instruction::SchemaConfig& schema, uint64_t seed) {
    std::vector<InstructionSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({instruction::build_prompt(schema, pool, seed, s), s.label});
    return out;
}

NeuralTrainResult stage2_finetune_detector(nn::Seq2SeqModel lm_inst, const std::vector<InstructionSample>& data,
                                           const TrainConfig& config, const Stage2Options& options) {
    config.validate();
    if (data.empty()) throw DataError("stage-2 fine-tuning needs at least one instruction sample");
    if (options.train.run_dir.empty()) throw ConfigError("stage-2 fine-tuning needs a run directory");
    std::vector<std::string> surfaces;
    for (const auto& d : data)
        surfaces.push_back(instruction::label_surface(options.schema, d.gold, d.prompt.definition.language));

    std::shared_ptr<nn::Seq2SeqModel> model;
    nn::Adam optimizer;
    int first_epoch = 1;
    if (!options.train.resume_from.empty()) {
        model = std::make_shared<nn::Seq2SeqModel>(nn::Seq2SeqModel::load(options.train.resume_from / "model"));
        first_epoch = load_trainer_state(options.train.resume_from, optimizer, model->params()) + 1;
    } else {
        model = std::make_shared<nn::Seq2SeqModel>(std::move(lm_inst));
        std::vector<std::string> tokens;
        auto collect = [&](std::string_view s) {
            for (const auto& tok : model->tokenizer().tokenize(s)) tokens.push_back(tok.text);
        };
        for (const auto& d : data) collect(d.prompt.assembled);
        for (const auto& s : options.positive_pool) collect(s.text);
        for (const auto& s : surfaces) collect(s);
        model->extend_vocabulary(tokens);
    }

    std::vector<nn::EncodedInput> sources;
    std::vector<std::vector<int>> targets;
    for (size_t i = 0; i < data.size(); ++i) {
        sources.push_back(model->encode_source(data[i].prompt.assembled));
        targets.push_back(model->encode_target(surfaces[i]));
    }

    const auto& run_dir = options.train.run_dir;
    std::filesystem::create_directories(run_dir);
    const std::string pool_name = "positives.jsonl";
    {
        std::vector<json> rows;
        for (const auto& s : options.positive_pool) rows.push_back(to_json(s));
        io::write_jsonl(run_dir / pool_name, rows);
    }
    auto pool = std::make_shared<const std::vector<Sample>>(options.positive_pool);
    json snapshot{{"train", config.to_json()},
                  {"prompt_seed", options.prompt_seed},
                  {"free_generation", options.free_generation},
                  {"model", model->config().to_json()}};

    NeuralTrainResult result;
    run_training_loop(
        model->params(), optimizer, data.size(), config, first_epoch,
        [&](nn::Tape& t, size_t i) { return model->loss(t, sources[i], targets[i]); },
        [&](int epoch, double loss) {
            GenerativeDetector detector(model, options.schema, pool, options.prompt_seed, options.free_generation);
            EpochLog entry{epoch, loss, std::nullopt};
            if (!options.train.val.empty()) entry.val_accuracy = accuracy(detector, options.train.val);
            auto dir = epoch_dir(run_dir, epoch);
            detector.save(dir, "../" + pool_name);
            save_trainer_state(dir, epoch, optimizer, model->params());
            DetectorHandle h{DetectorKind::generative, dir, snapshot};
            h.save(dir / "handle.json");
            append_train_log(run_dir, entry);
            result.checkpoints.push_back({epoch, dir, entry.val_accuracy});
            result.log.push_back(entry);
            result.final_handle = h;
        });
    GenerativeDetector final_detector(model, options.schema, pool, options.prompt_seed, options.free_generation);
    size_t correct = 0;
    for (const auto& d : data) correct += final_detector.predict(DetectorInput{d.prompt}).label == d.gold;
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return result;
}

}  // namespace sidetect::detectors
