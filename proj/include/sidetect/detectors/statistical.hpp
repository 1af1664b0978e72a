#pragma once

#include "sidetect/detectors/detector.hpp"
#include "sidetect/detectors/logistic.hpp"
#include "sidetect/detectors/rank_features.hpp"
#include "sidetect/detectors/training.hpp"

namespace sidetect::detectors {

class StatisticalDetector : public Detector {
public:
    StatisticalDetector(KneserNeyTrigram scorer, LogisticModel model);

    DetectorKind kind() const override { return DetectorKind::statistical; }
    DetectorOutput predict(const DetectorInput& input) const override;

    const KneserNeyTrigram& scorer() const { return scorer_; }
    const LogisticModel& model() const { return model_; }

    void save(const std::filesystem::path& dir) const;
    static StatisticalDetector load(const std::filesystem::path& dir);

private:
    KneserNeyTrigram scorer_;
    LogisticModel model_;
};

struct StatisticalOptions {
    int folds = 5;  // cross-fitting folds for training features
    double discount = 0.75;
    LogisticOptions logistic;
};

struct StatisticalResult {
    StatisticalDetector detector;
    DetectorHandle handle;
    double train_accuracy = 0.0;
    std::optional<double> val_accuracy;
};

// Fits the trigram scorer on the human-labeled training texts and the
// logistic model on their rank features. Training features are cross-fitted:
// each text is scored by a trigram model that never saw it. Writes the
// artifact to run_dir/epoch-1 (a single "epoch") with a train log entry.
StatisticalResult train_statistical(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                    const std::filesystem::path& run_dir, const StatisticalOptions& options = {});

}  // namespace sidetect::detectors
