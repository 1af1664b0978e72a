#include "sidetect/synthetic.hpp"

#include <random>

#include "sidetect/error.hpp"
#include "sidetect/io.hpp"
#include "sidetect/text.hpp"

namespace sidetect::synthetic {

namespace {

std::mt19937_64 seeded(const std::string& tag, uint64_t seed) {
    return std::mt19937_64(io::stable_hash64(tag + ":" + std::to_string(seed)));
}

size_t between(std::mt19937_64& rng, size_t lo, size_t hi) { return lo + rng() % (hi - lo + 1); }

bool coin(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

const std::string& pick(std::mt19937_64& rng, const std::vector<std::string>& words) {
    return words[rng() % words.size()];
}

std::vector<std::string> numbered(const std::string& stem, size_t n) {
    std::vector<std::string> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(stem + std::to_string(i));
    return out;
}

Sample make_sample(const std::string& pair_id, Label label, Task task, std::string text, std::string source = {}) {
    Sample s;
    s.pair_id = pair_id;
    s.sample_id = pair_id + (label == Label::human ? "#h" : "#m");
    s.text = std::move(text);
    s.label = label;
    s.task = task;
    s.language = Language::en;
    s.source_corpus = "synthetic-" + std::string(to_string(task));
    s.source_text = std::move(source);
    return s;
}

const std::vector<std::string>& content_words() {
    static const auto words = numbered("c", 500);
    return words;
}

// Style words per family and label. Disjoint across families.
const std::vector<std::string> kQaHuman{"lol", "tbh", "idk", "imo", "yeah", "kinda", "honestly", "dunno"};
const std::vector<std::string> kQaModel{"furthermore", "additionally", "overall", "importantly",
                                        "notably",     "consequently", "generally", "typically"};
const std::vector<std::string> kParaHuman{"like", "just", "really", "stuff", "pretty", "anyway", "basically", "ok"};
const std::vector<std::string> kParaModel{"regarding", "concerning", "essentially", "specifically",
                                          "particularly", "precisely", "namely",    "thereby"};

std::string styled(std::mt19937_64& rng, size_t n, const std::vector<std::string>& style, double share) {
    std::vector<std::string> out;
    for (size_t i = 0; i < n; ++i) out.push_back(coin(rng, share) ? pick(rng, style) : pick(rng, content_words()));
    return text::join(out, " ");
}

std::string rewrite(std::mt19937_64& rng, const std::vector<std::string>& source,
                    const std::vector<std::string>& replacements, double share) {
    std::vector<std::string> out;
    for (const auto& w : source) out.push_back(coin(rng, share) ? pick(rng, replacements) : w);
    return text::join(out, " ");
}

}  // namespace

std::vector<Sample> rank_biased_corpus(size_t pairs, uint64_t seed, const std::string& prefix,
                                       const RankBiasOptions& options) {
    if (options.min_tokens == 0 || options.min_tokens > options.max_tokens || options.top_words == 0 ||
        options.tail_words == 0)
        throw ConfigError("invalid rank-bias options");
    auto top = numbered("t", options.top_words);
    auto tail = numbered("r", options.tail_words);
    auto rng = seeded("rank-bias:" + prefix, seed);
    auto emit = [&](double top_share) {
        size_t n = between(rng, options.min_tokens, options.max_tokens);
        std::vector<std::string> out;
        for (size_t i = 0; i < n; ++i) out.push_back(coin(rng, top_share) ? pick(rng, top) : pick(rng, tail));
        return text::join(out, " ");
    };
    std::vector<Sample> out;
    for (size_t i = 0; i < pairs; ++i) {
        auto id = prefix + "-" + std::to_string(i);
        out.push_back(make_sample(id, Label::human, Task::qa, emit(options.human_top_share)));
        out.push_back(make_sample(id, Label::model, Task::qa, emit(options.model_top_share)));
    }
    return out;
}

std::vector<Sample> task_family_corpus(Task family, size_t pairs, uint64_t seed, const std::string& prefix) {
    auto rng = seeded("family:" + prefix + ":" + std::string(to_string(family)), seed);
    std::vector<Sample> out;
    for (size_t i = 0; i < pairs; ++i) {
        auto id = prefix + "-" + std::to_string(i);
        std::string human, model, source;
        switch (family) {
            case Task::qa: {
                source = styled(rng, between(rng, 6, 10), {}, 0.0);
                human = styled(rng, between(rng, 12, 20), kQaHuman, 0.3);
                model = styled(rng, between(rng, 12, 20), kQaModel, 0.3);
                break;
            }
            case Task::paraphrasing: {
                auto words = text::whitespace_tokens(styled(rng, between(rng, 10, 16), {}, 0.0));
                source = text::join(words, " ");
                human = rewrite(rng, words, kParaHuman, 0.2);
                model = rewrite(rng, words, kParaModel, 0.2);
                break;
            }
            case Task::translation: {
                auto words = text::whitespace_tokens(styled(rng, between(rng, 12, 20), {}, 0.0));
                source = "src " + text::join(words, " ");
                human = text::join(words, " ");
                model = rewrite(rng, words, content_words(), 0.1);
                break;
            }
            default:
                throw ConfigError("no synthetic family for task " + std::string(to_string(family)));
        }
        out.push_back(make_sample(id, Label::human, family, human, source));
        out.push_back(make_sample(id, Label::model, family, model, source));
    }
    return out;
}

std::vector<Sample> separable_corpus(size_t pairs, uint64_t seed, const std::string& prefix) {
    auto rng = seeded("separable:" + prefix, seed);
    auto ma = numbered("ma", 8), hu = numbered("hu", 8);
    auto words = [&](size_t n, const std::vector<std::string>& from) {
        std::vector<std::string> out;
        for (size_t i = 0; i < n; ++i) out.push_back(pick(rng, from));
        return text::join(out, " ");
    };
    std::vector<Sample> out;
    for (size_t i = 0; i < pairs; ++i) {
        auto id = prefix + "-" + std::to_string(i);
        out.push_back(make_sample(id, Label::human, Task::qa, words(8, hu)));
        out.push_back(make_sample(id, Label::model, Task::qa, "zmark " + words(7, ma)));
    }
    return out;
}

void set_split(std::vector<Sample>& samples, Split split) {
    for (auto& s : samples) s.split = split;
}

}  // namespace sidetect::synthetic
