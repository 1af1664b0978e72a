#pragma once

#include <filesystem>
#include <memory>
#include <string_view>
#include <variant>

#include "sidetect/error.hpp"
#include "sidetect/detectors/training.hpp"
#include "sidetect/instruction.hpp"
#include "sidetect/records.hpp"

namespace sidetect::detectors {

enum class DetectorKind { statistical, encoder, generative };

std::string_view to_string(DetectorKind kind);
// Throws ConfigError on an unknown name.
DetectorKind parse_detector_kind(std::string_view name);

// Serialized as handle.json next to (or inside) the artifact directory.
struct DetectorHandle {
    DetectorKind kind = DetectorKind::statistical;
    std::filesystem::path artifact;  // directory holding the model files
    json config = json::object();    // snapshot of the training configuration

    json to_json() const;
    static DetectorHandle from_json(const json& j, const std::filesystem::path& base_dir = {});
    void save(const std::filesystem::path& path) const;
    static DetectorHandle load(const std::filesystem::path& path);
};

// Raw text for statistical and encoder detectors, a prompt for generative ones.
using DetectorInput = std::variant<std::string, instruction::InstructionPrompt>;

struct DetectorOutput {
    Label label = Label::human;
    double score = 0.0;  // probability (or normalized score) of the model class
};

class KindMismatch : public DataError {
public:
    using DataError::DataError;
};

class Detector {
public:
    virtual ~Detector() = default;
    virtual DetectorKind kind() const = 0;
    // Read-only; safe for concurrent callers.
    virtual DetectorOutput predict(const DetectorInput& input) const = 0;
    // Builds the kind-appropriate input for a dataset sample.
    virtual DetectorOutput predict_sample(const Sample& sample) const;
};

// Throws DataError when the artifact cannot be loaded.
std::unique_ptr<Detector> load_detector(const DetectorHandle& handle);
DetectorOutput predict(const DetectorHandle& handle, const DetectorInput& input);

double accuracy(const Detector& detector, const std::vector<Sample>& samples);

struct NeuralTrainResult {
    std::vector<Checkpoint> checkpoints;
    std::vector<EpochLog> log;
    DetectorHandle final_handle;  // last epoch
    double train_accuracy = 0.0;  // of the final model on the training data
};

}  // namespace sidetect::detectors
