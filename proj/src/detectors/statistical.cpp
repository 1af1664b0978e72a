#include "sidetect/detectors/statistical.hpp"

#include <cmath>

#include "sidetect/text.hpp"

namespace sidetect::detectors {

StatisticalDetector::StatisticalDetector(KneserNeyTrigram scorer, LogisticModel model)
    : scorer_(std::move(scorer)), model_(std::move(model)) {}

DetectorOutput StatisticalDetector::predict(const DetectorInput& input) const {
    const auto* text = std::get_if<std::string>(&input);
    if (!text) throw KindMismatch("statistical detector expects raw text, got an instruction prompt");
    if (text::model_tokens(*text).empty()) {
        // No tokens to rank: fall back to the prior implied by the bias.
        double p = model_.score(std::array<double, 4>{});
        return {p >= 0.5 ? Label::model : Label::human, p};
    }
    auto f = extract_rank_features(*text, scorer_);
    double p = model_.score(f);
    return {p >= 0.5 ? Label::model : Label::human, p};
}

void StatisticalDetector::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    io::write_file(dir / "scorer.json", scorer_.to_json().dump());
    io::write_file(dir / "logistic.json", model_.to_json().dump(2) + "\n");
}

StatisticalDetector StatisticalDetector::load(const std::filesystem::path& dir) {
    for (const char* f : {"scorer.json", "logistic.json"})
        if (!std::filesystem::exists(dir / f)) throw DataError("missing " + (dir / f).string());
    try {
        return StatisticalDetector(KneserNeyTrigram::from_json(json::parse(io::read_file(dir / "scorer.json"))),
                                   LogisticModel::from_json(json::parse(io::read_file(dir / "logistic.json"))));
    } catch (const json::parse_error& e) {
        throw DataError(dir.string() + ": " + e.what());
    }
}

StatisticalResult train_statistical(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                    const std::filesystem::path& run_dir, const StatisticalOptions& options) {
    if (train.empty()) throw DataError("empty training split");
    if (options.folds < 2) throw ConfigError("cross-fitting needs at least 2 folds");
    const auto folds = static_cast<size_t>(options.folds);

    // Fold of a sample follows its pair, so both texts of a pair share a fold.
    auto fold_of = [&](const Sample& s) { return io::stable_hash64("fold:" + s.pair_id) % folds; };
    std::vector<KneserNeyTrigram> fold_scorers;
    for (size_t f = 0; f < folds; ++f) {
        std::vector<std::string> texts;
        for (const auto& s : train)
            if (s.label == Label::human && fold_of(s) != f) texts.push_back(s.text);
        KneserNeyTrigram kn(options.discount);
        kn.train(texts);
        fold_scorers.push_back(std::move(kn));
    }
    std::vector<RankFeatureVector> features;
    std::vector<Label> labels;
    for (const auto& s : train) {
        if (text::model_tokens(s.text).empty()) continue;
        features.push_back(extract_rank_features(s.text, fold_scorers[fold_of(s)]));
        labels.push_back(s.label);
    }
    std::vector<std::string> human;
    for (const auto& s : train)
        if (s.label == Label::human) human.push_back(s.text);
    KneserNeyTrigram scorer(options.discount);
    scorer.train(human);
    auto model = train_statistical_detector(features, labels, scorer.id(), options.logistic);

    StatisticalResult result{StatisticalDetector(std::move(scorer), std::move(model)), {}, 0.0, std::nullopt};
    result.train_accuracy = result.detector.model().training_accuracy;
    if (!val.empty()) result.val_accuracy = accuracy(result.detector, val);

    auto dir = epoch_dir(run_dir, 1);
    result.detector.save(dir);
    result.handle.kind = DetectorKind::statistical;
    result.handle.artifact = dir;
    result.handle.config = json{{"folds", options.folds},
                                {"discount", options.discount},
                                {"l2", options.logistic.l2},
                                {"scoring_lm_id", result.detector.model().scoring_lm_id}};
    result.handle.save(dir / "handle.json");
    double log_loss = 0.0;
    for (size_t i = 0; i < features.size(); ++i) {
        double p = result.detector.model().score(features[i]);
        log_loss -= std::log(labels[i] == Label::model ? p : 1.0 - p);
    }
    append_train_log(run_dir, EpochLog{1, log_loss / static_cast<double>(features.size()), result.val_accuracy});
    return result;
}

}  // namespace sidetect::detectors
