#pragma once

#include <array>
#include <string>
#include <vector>

#include "sidetect/detectors/rank_features.hpp"
#include "sidetect/types.hpp"

namespace sidetect::detectors {

struct LogisticOptions {
    double l2 = 1e-3;  // on weights only, applied to the mean log-loss
    int max_iterations = 100;
    double tolerance = 1e-10;
};

// p(model | x) = sigmoid(w . x + b) over the normalized bucket fractions.
struct LogisticModel {
    std::array<double, 4> weights{};
    double bias = 0.0;
    std::string scoring_lm_id;
    double training_accuracy = 0.0;

    double score(const std::array<double, 4>& x) const;  // in (0, 1)
    double score(const RankFeatureVector& f) const { return score(f.normalized); }
    Label predict(const RankFeatureVector& f) const;

    json to_json() const;
    static LogisticModel from_json(const json& j);
};

// Newton's method on the L2-regularized mean log-loss; the objective is
// strictly convex, so the result does not depend on data order or seed.
// Throws DataError unless both classes are present.
LogisticModel train_logistic(const std::vector<std::array<double, 4>>& features, const std::vector<Label>& labels,
                             const LogisticOptions& options = {});

LogisticModel train_statistical_detector(const std::vector<RankFeatureVector>& features,
                                         const std::vector<Label>& labels, std::string scoring_lm_id,
                                         const LogisticOptions& options = {});

}  // namespace sidetect::detectors
