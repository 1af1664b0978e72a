#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sidetect/records.hpp"

// Constructed corpora with known structure, for checking that detectors and
// analyses respond to the signal they are meant to respond to.
namespace sidetect::synthetic {

// Vocabulary split into rank bands by intended frequency. "Top" words are
// the 10 most frequent; the rest are spread over the remaining bands.
struct RankBiasOptions {
    double human_top_share = 0.4;
    double model_top_share = 0.8;
    size_t min_tokens = 30;
    size_t max_tokens = 50;
    size_t top_words = 10;
    size_t tail_words = 2990;
};

// One human and one model text per pair. Both sources draw the non-top
// tokens uniformly from the same tail, so only the top-band share differs.
std::vector<Sample> rank_biased_corpus(size_t pairs, uint64_t seed, const std::string& prefix = "gltr",
                                       const RankBiasOptions& options = {});

// Task families whose model texts differ from human texts through
// family-specific style words (disjoint between families).
//   qa: independent answers to a question, with casual vs formal fillers.
//   paraphrasing: both rewrites start from the source question and replace
//   about a fifth of its words with family style words.
//   translation: the model text is a near copy of the human reference.
std::vector<Sample> task_family_corpus(Task family, size_t pairs, uint64_t seed, const std::string& prefix);

// Model texts "zmark" plus 7 words from ma0-ma7; human texts 8 words from
// hu0-hu7. Trivially separable, and any two texts of the same class share
// words, for memorization checks.
std::vector<Sample> separable_corpus(size_t pairs, uint64_t seed, const std::string& prefix = "sep");

// Sets split on every sample.
void set_split(std::vector<Sample>& samples, Split split);

}  // namespace sidetect::synthetic
