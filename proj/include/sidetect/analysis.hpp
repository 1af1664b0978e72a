#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sidetect/records.hpp"

namespace sidetect::analysis {

// Multiset n-gram intersection size divided by max(1, n-gram count of a).
// `a` is the machine text. Throws std::invalid_argument when n < 1.
double ngram_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b, int n);
double ngram_overlap(std::string_view a, std::string_view b, int n, Language language = Language::en);

// Size of the multiset n-gram intersection (the numerator above).
size_t ngram_intersection(const std::vector<std::string>& a, const std::vector<std::string>& b, int n);

size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);
// LCS length / max(1, max(|a|, |b|)).
double lcs_ratio(const std::vector<std::string>& a, const std::vector<std::string>& b);
double lcs_ratio(std::string_view a, std::string_view b, Language language = Language::en);

struct OverlapStats {
    std::string name;  // task group or corpus
    size_t count = 0;
    double ngram_mean = 0.0;
    double ngram_stddev = 0.0;  // population stddev
    double lcs_mean = 0.0;
    double lcs_stddev = 0.0;
};

struct OverlapSummary {
    int n = 2;
    std::vector<OverlapStats> per_task;    // fixed task order
    std::vector<OverlapStats> per_corpus;  // sorted by corpus name
    std::vector<Task> ranking;             // by mean n-gram overlap, descending
    size_t skipped = 0;
    std::vector<std::string> warnings;
};

// Pairs human and model samples by pair_id; incomplete pairs are skipped with
// a warning. Ties in the ranking fall back to LCS mean, then task order.
OverlapSummary task_overlap_summary(const std::vector<Sample>& samples, int n = 2);

std::string render_overlap_markdown(const OverlapSummary& summary);

}  // namespace sidetect::analysis
