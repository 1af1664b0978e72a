#pragma once

// Independent reference computations used to check library results.

#include <algorithm>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sidetect/types.hpp"

namespace sidetect::oracle {

struct Metrics {
    std::optional<double> precision_human, recall_human, precision_model, recall_model;
    double accuracy = 0.0;
};

// Counts directly from the prediction list: precision of class c is the share
// of items predicted c whose gold is c; recall is the share of gold-c items
// predicted c.
inline Metrics brute_force_metrics(const std::vector<std::pair<Label, Label>>& gp) {
    Metrics m;
    auto share = [&](Label filter_on_pred, bool by_pred) -> std::optional<double> {
        size_t den = 0, num = 0;
        for (const auto& [g, p] : gp) {
            Label key = by_pred ? p : g;
            if (key != filter_on_pred) continue;
            ++den;
            if (g == p) ++num;
        }
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    m.precision_human = share(Label::human, true);
    m.precision_model = share(Label::model, true);
    m.recall_human = share(Label::human, false);
    m.recall_model = share(Label::model, false);
    size_t correct = static_cast<size_t>(std::count_if(gp.begin(), gp.end(), [](auto& x) { return x.first == x.second; }));
    m.accuracy = static_cast<double>(correct) / static_cast<double>(gp.size());
    return m;
}

inline std::vector<std::pair<Label, Label>> random_predictions(std::mt19937_64& rng, size_t max_n) {
    std::uniform_int_distribution<size_t> len(1, max_n);
    std::bernoulli_distribution coin(0.5);
    // Skew some sets so one predicted class is empty.
    std::uniform_int_distribution<int> mode(0, 3);
    int m = mode(rng);
    std::vector<std::pair<Label, Label>> out(len(rng));
    for (auto& [g, p] : out) {
        g = coin(rng) ? Label::human : Label::model;
        p = m == 0 ? Label::human : (m == 1 ? Label::model : (coin(rng) ? Label::human : Label::model));
    }
    return out;
}

// Textbook O(nm) LCS over full table.
inline size_t lcs_table(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<size_t>> t(a.size() + 1, std::vector<size_t>(b.size() + 1, 0));
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j)
            t[i + 1][j + 1] = a[i] == b[j] ? t[i][j] + 1 : std::max(t[i][j + 1], t[i + 1][j]);
    return t[a.size()][b.size()];
}

// Micro overall from group (accuracy, count) rows.
inline double micro(const std::vector<std::pair<double, double>>& rows) {
    double s = 0, n = 0;
    for (auto [a, c] : rows) {
        s += a * c;
        n += c;
    }
    return s / n;
}

}  // namespace sidetect::oracle
