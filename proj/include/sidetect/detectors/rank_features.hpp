#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sidetect/io.hpp"

namespace sidetect::detectors {

// An autoregressive scorer: for each token of a text, the 1-based rank of the
// realized token in the next-token distribution given its history.
class RankScorer {
public:
    virtual ~RankScorer() = default;
    virtual std::vector<size_t> token_ranks(std::string_view text) const = 0;
    virtual std::string id() const = 0;
};

// Interpolated Kneser-Ney trigram model over text::model_tokens. Ties in
// probability are ranked by token id, so ranks are a strict order.
class KneserNeyTrigram : public RankScorer {
public:
    explicit KneserNeyTrigram(double discount = 0.75);

    void train(const std::vector<std::string>& texts);

    std::vector<size_t> token_ranks(std::string_view text) const override;
    std::string id() const override;

    // Full next-token distribution after the two history ids.
    std::vector<double> distribution(int u, int v) const;
    double probability(int u, int v, int w) const;

    int token_id(const std::string& token) const;  // unknown tokens map to <unk>
    size_t vocab_size() const { return vocab_.size(); }

    json to_json() const;
    static KneserNeyTrigram from_json(const json& j);

    static constexpr int kBos = 0;
    static constexpr int kUnk = 1;

private:
    void rebuild();
    static uint64_t key2(int a, int b) { return (static_cast<uint64_t>(a) << 32) | static_cast<uint32_t>(b); }

    double discount_;
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, int> index_;
    std::vector<std::array<int, 4>> trigram_counts_;  // u, v, w, count

    // Derived tables.
    std::vector<double> unigram_;  // continuation unigram with uniform floor
    struct Context {
        double total = 0;                  // count (or continuation count) of the context
        double distinct = 0;               // distinct followers
        std::vector<std::pair<int, double>> followers;
    };
    std::unordered_map<int, Context> bigram_;       // keyed by v, continuation counts
    std::unordered_map<uint64_t, Context> trigram_;  // keyed by (u, v), raw counts
};

struct RankFeatureVector {
    std::array<size_t, 4> bucket_counts{};
    size_t token_count = 0;
    std::array<double, 4> normalized{};
};

// Bucket index for ranks 1-10, 11-100, 101-1000, above 1000.
int rank_bucket(size_t rank);

RankFeatureVector features_from_ranks(const std::vector<size_t>& ranks);

// Throws DataError when the text yields no tokens.
RankFeatureVector extract_rank_features(std::string_view text, const RankScorer& scorer);

}  // namespace sidetect::detectors
