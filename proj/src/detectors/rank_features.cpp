#include "sidetect/detectors/rank_features.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "sidetect/error.hpp"
#include "sidetect/text.hpp"

namespace sidetect::detectors {

KneserNeyTrigram::KneserNeyTrigram(double discount) : discount_(discount) {
    if (!(discount > 0.0 && discount < 1.0)) throw ConfigError("Kneser-Ney discount must be in (0, 1)");
    vocab_ = {"<s>", "<unk>"};
    index_ = {{"<s>", kBos}, {"<unk>", kUnk}};
    rebuild();
}

int KneserNeyTrigram::token_id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

void KneserNeyTrigram::train(const std::vector<std::string>& texts) {
    std::map<std::array<int, 3>, int> counts;
    for (const auto& [u, v, w, c] : trigram_counts_) counts[{u, v, w}] += c;
    for (const auto& t : texts) {
        int u = kBos, v = kBos;
        for (const auto& tok : text::model_tokens(t)) {
            auto [it, inserted] = index_.emplace(tok, static_cast<int>(vocab_.size()));
            if (inserted) vocab_.push_back(tok);
            int w = it->second;
            counts[{u, v, w}]++;
            u = v;
            v = w;
        }
    }
    trigram_counts_.clear();
    for (const auto& [k, c] : counts) trigram_counts_.push_back({k[0], k[1], k[2], c});
    rebuild();
}

void KneserNeyTrigram::rebuild() {
    const size_t V = vocab_.size();
    trigram_.clear();
    bigram_.clear();
    // Trigram level: raw counts per (u, v).
    std::set<std::pair<int, int>> bigram_types;  // distinct (v, w) with a left context
    for (const auto& [u, v, w, c] : trigram_counts_) {
        auto& ctx = trigram_[key2(u, v)];
        ctx.total += c;
        ctx.distinct += 1;
        ctx.followers.emplace_back(w, c);
        bigram_types.insert({v, w});
    }
    // Bigram level: continuation counts N1+(. v w).
    std::map<std::pair<int, int>, int> cont;
    for (const auto& [u, v, w, c] : trigram_counts_) cont[{v, w}]++;
    std::vector<double> unigram_cont(V, 0.0);
    for (const auto& [vw, n] : cont) {
        auto& ctx = bigram_[vw.first];
        ctx.total += n;
        ctx.distinct += 1;
        ctx.followers.emplace_back(vw.second, n);
        unigram_cont[static_cast<size_t>(vw.second)] += 1;  // N1+(. w) over distinct v
    }
    // Unigram level: continuation counts N1+(. w), interpolated with uniform.
    double total = 0.0, types = 0.0;
    for (double c : unigram_cont) {
        total += c;
        if (c > 0) types += 1;
    }
    unigram_.assign(V, 1.0 / static_cast<double>(V));
    if (total > 0) {
        double floor_mass = discount_ * types / total;
        for (size_t w = 0; w < V; ++w)
            unigram_[w] = std::max(unigram_cont[w] - discount_, 0.0) / total + floor_mass / static_cast<double>(V);
    }
}

std::vector<double> KneserNeyTrigram::distribution(int u, int v) const {
    std::vector<double> p = unigram_;
    auto interpolate = [&](const Context& ctx) {
        double backoff = discount_ * ctx.distinct / ctx.total;
        for (auto& x : p) x *= backoff;
        for (const auto& [w, c] : ctx.followers) p[static_cast<size_t>(w)] += std::max(c - discount_, 0.0) / ctx.total;
    };
    if (auto it = bigram_.find(v); it != bigram_.end()) interpolate(it->second);
    if (auto it = trigram_.find(key2(u, v)); it != trigram_.end()) interpolate(it->second);
    return p;
}

double KneserNeyTrigram::probability(int u, int v, int w) const {
    return distribution(u, v).at(static_cast<size_t>(w));
}

std::vector<size_t> KneserNeyTrigram::token_ranks(std::string_view input) const {
    std::vector<size_t> ranks;
    int u = kBos, v = kBos;
    for (const auto& tok : text::model_tokens(input)) {
        int w = token_id(tok);
        auto p = distribution(u, v);
        const double pw = p[static_cast<size_t>(w)];
        size_t rank = 1;
        for (size_t i = 0; i < p.size(); ++i) {
            if (p[i] > pw || (p[i] == pw && static_cast<int>(i) < w)) ++rank;
        }
        ranks.push_back(rank);
        u = v;
        v = w;
    }
    return ranks;
}

std::string KneserNeyTrigram::id() const {
    return "kn3-d" + std::to_string(discount_).substr(0, 4) + "-v" + std::to_string(vocab_.size());
}

json KneserNeyTrigram::to_json() const {
    json counts = json::array();
    for (const auto& c : trigram_counts_) counts.push_back({c[0], c[1], c[2], c[3]});
    return json{{"discount", discount_}, {"vocab", vocab_}, {"trigrams", counts}};
}

KneserNeyTrigram KneserNeyTrigram::from_json(const json& j) {
    try {
        KneserNeyTrigram m(j.at("discount").get<double>());
        m.vocab_ = j.at("vocab").get<std::vector<std::string>>();
        m.index_.clear();
        for (size_t i = 0; i < m.vocab_.size(); ++i) m.index_[m.vocab_[i]] = static_cast<int>(i);
        for (const auto& c : j.at("trigrams")) m.trigram_counts_.push_back({c[0], c[1], c[2], c[3]});
        m.rebuild();
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed scorer artifact: ") + e.what());
    }
}

int rank_bucket(size_t rank) {
    if (rank <= 10) return 0;
    if (rank <= 100) return 1;
    if (rank <= 1000) return 2;
    return 3;
}

RankFeatureVector features_from_ranks(const std::vector<size_t>& ranks) {
    if (ranks.empty()) throw DataError("rank features need at least one token");
    RankFeatureVector f;
    for (size_t r : ranks) f.bucket_counts[static_cast<size_t>(rank_bucket(r))]++;
    f.token_count = ranks.size();
    for (size_t i = 0; i < 4; ++i)
        f.normalized[i] = static_cast<double>(f.bucket_counts[i]) / static_cast<double>(f.token_count);
    return f;
}

RankFeatureVector extract_rank_features(std::string_view text, const RankScorer& scorer) {
    if (text::trim(text).empty()) throw DataError("cannot extract rank features from empty text");
    return features_from_ranks(scorer.token_ranks(text));
}

}  // namespace sidetect::detectors
