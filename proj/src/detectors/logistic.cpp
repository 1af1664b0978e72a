#include "sidetect/detectors/logistic.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "sidetect/error.hpp"

namespace sidetect::detectors {

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

double LogisticModel::score(const std::array<double, 4>& x) const {
    double z = bias;
    for (size_t i = 0; i < 4; ++i) z += weights[i] * x[i];
    // Keep the score strictly inside (0, 1).
    return std::clamp(sigmoid(z), 1e-15, 1.0 - 1e-15);
}

Label LogisticModel::predict(const RankFeatureVector& f) const {
    return score(f) >= 0.5 ? Label::model : Label::human;
}

json LogisticModel::to_json() const {
    return json{{"weights", weights}, {"bias", bias}, {"scoring_lm_id", scoring_lm_id},
                {"training_accuracy", training_accuracy}};
}

LogisticModel LogisticModel::from_json(const json& j) {
    try {
        LogisticModel m;
        m.weights = j.at("weights").get<std::array<double, 4>>();
        m.bias = j.at("bias").get<double>();
        m.scoring_lm_id = j.value("scoring_lm_id", std::string{});
        m.training_accuracy = j.value("training_accuracy", 0.0);
        for (double w : m.weights)
            if (!std::isfinite(w)) throw DataError("non-finite logistic weight");
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed logistic model: ") + e.what());
    }
}

LogisticModel train_logistic(const std::vector<std::array<double, 4>>& features, const std::vector<Label>& labels,
                             const LogisticOptions& options) {
    if (features.size() != labels.size()) throw DataError("features and labels differ in length");
    size_t positives = 0;
    for (Label l : labels) positives += l == Label::model;
    if (positives == 0 || positives == labels.size())
        throw DataError("statistical detector needs both classes in the training data");

    const auto n = static_cast<Eigen::Index>(features.size());
    Eigen::MatrixXd X(n, 5);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int k = 0; k < 4; ++k) X(i, k) = features[static_cast<size_t>(i)][static_cast<size_t>(k)];
        X(i, 4) = 1.0;
        y(i) = labels[static_cast<size_t>(i)] == Label::model ? 1.0 : 0.0;
    }
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(5);
    Eigen::VectorXd reg = Eigen::VectorXd::Constant(5, options.l2);
    reg(4) = 0.0;
    // A tiny ridge on the bias keeps the Hessian invertible on separable data.
    Eigen::VectorXd ridge = reg;
    ridge(4) = 1e-12;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int it = 0; it < options.max_iterations; ++it) {
        Eigen::VectorXd p = (X * theta).unaryExpr([](double z) { return sigmoid(z); });
        Eigen::VectorXd grad = X.transpose() * (p - y) * inv_n + reg.cwiseProduct(theta);
        Eigen::VectorXd w = p.cwiseProduct(Eigen::VectorXd::Ones(n) - p);
        Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X * inv_n;
        H.diagonal() += ridge;
        Eigen::VectorXd step = H.ldlt().solve(grad);
        theta -= step;
        if (step.norm() < options.tolerance || grad.norm() < options.tolerance) break;
    }
    LogisticModel m;
    for (int k = 0; k < 4; ++k) m.weights[static_cast<size_t>(k)] = theta(k);
    m.bias = theta(4);
    for (double v : theta)
        if (!std::isfinite(v)) throw TrainingError("logistic regression diverged");
    size_t correct = 0;
    for (size_t i = 0; i < features.size(); ++i) {
        Label pred = m.score(features[i]) >= 0.5 ? Label::model : Label::human;
        correct += pred == labels[i];
    }
    m.training_accuracy = static_cast<double>(correct) / static_cast<double>(features.size());
    return m;
}

LogisticModel train_statistical_detector(const std::vector<RankFeatureVector>& features,
                                         const std::vector<Label>& labels, std::string scoring_lm_id,
                                         const LogisticOptions& options) {
    std::vector<std::array<double, 4>> x;
    x.reserve(features.size());
    for (const auto& f : features) x.push_back(f.normalized);
    auto m = train_logistic(x, labels, options);
    m.scoring_lm_id = std::move(scoring_lm_id);
    return m;
}

}  // namespace sidetect::detectors
