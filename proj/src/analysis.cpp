#include "sidetect/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "sidetect/text.hpp"

namespace sidetect::analysis {

namespace {

std::map<std::vector<std::string>, size_t> ngram_counts(const std::vector<std::string>& tokens, int n) {
    std::map<std::vector<std::string>, size_t> out;
    const auto un = static_cast<size_t>(n);
    for (size_t i = 0; i + un <= tokens.size(); ++i)
        out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                     tokens.begin() + static_cast<std::ptrdiff_t>(i + un))]++;
    return out;
}

struct Moments {
    double sum = 0.0, sum_sq = 0.0;
    size_t n = 0;
    void add(double x) {
        sum += x;
        sum_sq += x * x;
        ++n;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    double stddev() const {
        if (n == 0) return 0.0;
        double m = mean();
        return std::sqrt(std::max(0.0, sum_sq / static_cast<double>(n) - m * m));
    }
};

struct Acc {
    Moments ngram, lcs;
    OverlapStats stats(const std::string& name) const {
        return {name, ngram.n, ngram.mean(), ngram.stddev(), lcs.mean(), lcs.stddev()};
    }
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

size_t ngram_intersection(const std::vector<std::string>& a, const std::vector<std::string>& b, int n) {
    if (n < 1) throw std::invalid_argument("n-gram order must be at least 1");
    auto ca = ngram_counts(a, n);
    auto cb = ngram_counts(b, n);
    size_t common = 0;
    for (const auto& [g, k] : ca) {
        auto it = cb.find(g);
        if (it != cb.end()) common += std::min(k, it->second);
    }
    return common;
}

double ngram_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b, int n) {
    size_t common = ngram_intersection(a, b, n);
    size_t total = a.size() >= static_cast<size_t>(n) ? a.size() - static_cast<size_t>(n) + 1 : 0;
    return static_cast<double>(common) / static_cast<double>(std::max<size_t>(1, total));
}

double ngram_overlap(std::string_view a, std::string_view b, int n, Language language) {
    return ngram_overlap(text::tokenize(a, language), text::tokenize(b, language), n);
}

size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double lcs_ratio(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    return static_cast<double>(lcs_length(a, b)) /
           static_cast<double>(std::max<size_t>(1, std::max(a.size(), b.size())));
}

double lcs_ratio(std::string_view a, std::string_view b, Language language) {
    return lcs_ratio(text::tokenize(a, language), text::tokenize(b, language));
}

OverlapSummary task_overlap_summary(const std::vector<Sample>& samples, int n) {
    if (n < 1) throw std::invalid_argument("n-gram order must be at least 1");
    struct Pair {
        const Sample* human = nullptr;
        const Sample* model = nullptr;
    };
    std::map<std::string, Pair> pairs;
    for (const auto& s : samples) {
        auto& p = pairs[s.pair_id];
        (s.label == Label::human ? p.human : p.model) = &s;
    }
    OverlapSummary out;
    out.n = n;
    std::map<Task, Acc> by_task;
    std::map<std::string, Acc> by_corpus;
    for (const auto& [id, p] : pairs) {
        if (!p.human || !p.model) {
            ++out.skipped;
            continue;
        }
        auto a = text::tokenize(p.model->text, p.model->language);
        auto b = text::tokenize(p.human->text, p.human->language);
        double ng = ngram_overlap(a, b, n);
        double lcs = lcs_ratio(a, b);
        for (Acc* acc : {&by_task[p.model->task], &by_corpus[p.model->source_corpus]}) {
            acc->ngram.add(ng);
            acc->lcs.add(lcs);
        }
    }
    if (out.skipped > 0)
        out.warnings.push_back("skipped " + std::to_string(out.skipped) + " pair(s) without both labels");
    for (Task t : kAllTasks) {
        auto it = by_task.find(t);
        if (it == by_task.end()) continue;
        out.per_task.push_back(it->second.stats(std::string(to_string(t))));
        out.ranking.push_back(t);
    }
    for (const auto& [corpus, acc] : by_corpus) out.per_corpus.push_back(acc.stats(corpus));
    std::stable_sort(out.ranking.begin(), out.ranking.end(), [&](Task x, Task y) {
        const auto& a = by_task.at(x);
        const auto& b = by_task.at(y);
        if (a.ngram.mean() != b.ngram.mean()) return a.ngram.mean() > b.ngram.mean();
        return a.lcs.mean() > b.lcs.mean();
    });
    return out;
}

std::string render_overlap_markdown(const OverlapSummary& s) {
    std::ostringstream os;
    os << "# Machine/human target overlap\n\n";
    os << "n-gram order " << s.n << "; overlap is normalized by the machine text's n-gram count.\n\n";
    auto table = [&](const std::string& title, const std::vector<OverlapStats>& rows) {
        os << "## " << title << "\n\n";
        os << "| Name | Pairs | n-gram mean | n-gram std | LCS mean | LCS std |\n";
        os << "|---|---|---|---|---|---|\n";
        for (const auto& r : rows)
            os << "| " << r.name << " | " << r.count << " | " << fmt(r.ngram_mean) << " | " << fmt(r.ngram_stddev)
               << " | " << fmt(r.lcs_mean) << " | " << fmt(r.lcs_stddev) << " |\n";
        os << "\n";
    };
    table("By task", s.per_task);
    table("By corpus", s.per_corpus);
    os << "## Ranking (highest overlap first)\n\n";
    for (size_t i = 0; i < s.ranking.size(); ++i) os << (i + 1) << ". " << to_string(s.ranking[i]) << "\n";
    if (!s.warnings.empty()) {
        os << "\n## Warnings\n\n";
        for (const auto& w : s.warnings) os << "- " << w << "\n";
    }
    return os.str();
}

}  // namespace sidetect::analysis
