#pragma once

#include "sidetect/detectors/detector.hpp"
#include "sidetect/detectors/training.hpp"
#include "sidetect/nn/transformer.hpp"

namespace sidetect::detectors {

struct EncoderOptions {
    nn::TransformerConfig model = default_model();
    // Weights of a saved Seq2SeqModel whose encoder initializes this one
    // (matching parameter names and shapes, embeddings by token). Optional.
    std::filesystem::path init_from;

    static nn::TransformerConfig default_model();
    json to_json() const;
    static EncoderOptions from_json(const json& j);
};

// Transformer encoder, mean pooling over tokens, 2-way linear head. Inputs
// longer than max_sequence_length keep their last tokens.
class EncoderClassifier : public Detector {
public:
    EncoderClassifier(nn::TransformerConfig config, nn::Vocabulary vocab, int max_sequence_length, uint64_t seed);

    DetectorKind kind() const override { return DetectorKind::encoder; }
    DetectorOutput predict(const DetectorInput& input) const override;

    std::vector<int> encode(std::string_view text) const;
    nn::Var logits(nn::Tape& tape, const std::vector<int>& ids) const;
    double model_probability(std::string_view text) const;

    // Copies encoder weights from a saved Seq2SeqModel; returns how many
    // parameters were initialized.
    size_t init_from_seq2seq(const std::filesystem::path& dir);

    void save(const std::filesystem::path& dir) const;
    static EncoderClassifier load(const std::filesystem::path& dir);

    nn::ParameterSet& params() { return params_; }
    const nn::Vocabulary& vocab() const { return vocab_; }

private:
    nn::TransformerConfig config_;
    nn::Vocabulary vocab_;
    int max_len_;
    uint64_t seed_;
    nn::ParameterSet params_;
};

// Vocabulary from the training texts; one checkpoint per epoch under
// options.run_dir. Warns when the model-class share is outside [0.4, 0.6].
NeuralTrainResult train_encoder_classifier(const std::vector<Sample>& train, const TrainConfig& config,
                                           const EncoderOptions& encoder = {}, const TrainOptions& options = {});

}  // namespace sidetect::detectors
