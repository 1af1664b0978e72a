#include "sidetect/detectors/detector.hpp"

#include "sidetect/detectors/encoder_classifier.hpp"
#include "sidetect/detectors/generative.hpp"
#include "sidetect/detectors/statistical.hpp"

namespace sidetect::detectors {

std::string_view to_string(DetectorKind kind) {
    switch (kind) {
        case DetectorKind::statistical: return "statistical";
        case DetectorKind::encoder: return "encoder";
        case DetectorKind::generative: return "generative";
    }
    return "?";
}

DetectorKind parse_detector_kind(std::string_view name) {
    if (name == "statistical") return DetectorKind::statistical;
    if (name == "encoder") return DetectorKind::encoder;
    if (name == "generative") return DetectorKind::generative;
    throw ConfigError("unknown detector kind '" + std::string(name) +
                      "' (expected statistical, encoder or generative)");
}

json DetectorHandle::to_json() const {
    return json{{"kind", to_string(kind)}, {"artifact", artifact.string()}, {"config", config}};
}

DetectorHandle DetectorHandle::from_json(const json& j, const std::filesystem::path& base_dir) {
    try {
        DetectorHandle h;
        h.kind = parse_detector_kind(j.at("kind").get<std::string>());
        h.artifact = j.at("artifact").get<std::string>();
        if (h.artifact.is_relative() && !base_dir.empty()) h.artifact = base_dir / h.artifact;
        h.config = j.value("config", json::object());
        return h;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed detector handle: ") + e.what());
    }
}

void DetectorHandle::save(const std::filesystem::path& path) const {
    // Store the artifact relative to the handle file so run directories can move.
    DetectorHandle copy = *this;
    auto base = path.parent_path();
    if (!base.empty() && artifact.is_absolute() == std::filesystem::absolute(base).is_absolute()) {
        auto rel = std::filesystem::relative(std::filesystem::absolute(artifact), std::filesystem::absolute(base));
        if (!rel.empty()) copy.artifact = rel;
    }
    io::write_file(path, copy.to_json().dump(2) + "\n");
}

DetectorHandle DetectorHandle::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DataError("detector handle not found: " + path.string());
    try {
        return from_json(json::parse(io::read_file(path)), path.parent_path());
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

DetectorOutput Detector::predict_sample(const Sample& sample) const { return predict(DetectorInput{sample.text}); }

std::unique_ptr<Detector> load_detector(const DetectorHandle& handle) {
    if (!std::filesystem::is_directory(handle.artifact))
        throw DataError("detector artifact not found: " + handle.artifact.string());
    switch (handle.kind) {
        case DetectorKind::statistical:
            return std::make_unique<StatisticalDetector>(StatisticalDetector::load(handle.artifact));
        case DetectorKind::encoder:
            return std::make_unique<EncoderClassifier>(EncoderClassifier::load(handle.artifact));
        case DetectorKind::generative:
            return std::make_unique<GenerativeDetector>(GenerativeDetector::load(handle.artifact));
    }
    throw DataError("unknown detector kind");
}

DetectorOutput predict(const DetectorHandle& handle, const DetectorInput& input) {
    return load_detector(handle)->predict(input);
}

double accuracy(const Detector& detector, const std::vector<Sample>& samples) {
    if (samples.empty()) throw EvaluationError("accuracy over zero samples");
    size_t correct = 0;
    for (const auto& s : samples) correct += detector.predict_sample(s).label == s.label;
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace sidetect::detectors
