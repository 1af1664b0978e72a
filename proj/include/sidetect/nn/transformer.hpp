#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sidetect/io.hpp"
#include "sidetect/nn/tape.hpp"
#include "sidetect/nn/vocabulary.hpp"

namespace sidetect::nn {

struct TransformerConfig {
    int d_model = 64;
    int heads = 4;
    int ffn_dim = 128;
    int encoder_layers = 2;
    int decoder_layers = 1;
    int max_positions = 64;    // within-segment positions are clamped to this
    int max_segments = 16;
    int max_source_tokens = 320;  // longer sources keep their tail
    float init_std = 0.08f;
    // Learnable per-head attention bonus for query/key pairs holding the same
    // token id (encoder self-attention and decoder cross-attention).
    bool token_match_bias = true;
    float match_bias_init = 0.0f;  // initial bonus of head 0; other heads start at 0
    // Bucketed relative-position bias in encoder self-attention (T5 style:
    // exact for short distances, log-spaced up to 128). 0 turns it off.
    int relative_buckets = 0;

    json to_json() const;
    static TransformerConfig from_json(const json& j);
};

// Token ids plus, per token, its position inside its segment and the segment
// index. Segments start at each layout delimiter.
struct EncodedInput {
    std::vector<int> ids;
    std::vector<int> positions;
    std::vector<int> segments;
    size_t size() const { return ids.size(); }
};

// Splits text into model tokens, treating each configured delimiter string as
// a single token that opens a new segment.
class PromptTokenizer {
public:
    PromptTokenizer() = default;
    explicit PromptTokenizer(std::vector<std::string> delimiters);

    struct Token {
        std::string text;
        int position = 0;
        int segment = 0;
    };
    std::vector<Token> tokenize(std::string_view prompt) const;
    const std::vector<std::string>& delimiters() const { return delimiters_; }
    static std::string delimiter_token(std::string_view delimiter);

private:
    std::vector<std::string> delimiters_;
};

std::string detokenize(const std::vector<std::string>& tokens);

Matrix causal_mask(Eigen::Index n);

// Pre-LayerNorm transformer layers stored in a ParameterSet under `prefix`.
void add_encoder_layers(ParameterSet& params, const std::string& prefix,
                        const TransformerConfig& cfg, int layers, std::mt19937_64& rng);
// `ids` feeds the token-match bias when the config enables it.
// Bidirectional bucket of key_index - query_index.
int relative_bucket(int distance, int buckets);

Var encoder_layers_forward(Tape& tape, const ParameterSet& params, const std::string& prefix,
                           const TransformerConfig& cfg, int layers, Var x,
                           const std::vector<int>& ids);

void add_decoder_layers(ParameterSet& params, const std::string& prefix,
                        const TransformerConfig& cfg, int layers, std::mt19937_64& rng);
Var decoder_layers_forward(Tape& tape, const ParameterSet& params, const std::string& prefix,
                           const TransformerConfig& cfg, int layers, Var y, Var memory,
                           const std::vector<int>& ids, const std::vector<int>& memory_ids);

Matrix token_match_matrix(const std::vector<int>& query_ids, const std::vector<int>& key_ids);

// Encoder-decoder transformer with a pointer-generator output layer, so the
// decoder can copy any source token, including ones it has never produced.
class Seq2SeqModel {
public:
    Seq2SeqModel(TransformerConfig config, Vocabulary vocab, std::vector<std::string> delimiters,
                 uint64_t seed);

    static Seq2SeqModel load(const std::filesystem::path& dir);
    void save(const std::filesystem::path& dir) const;

    EncodedInput encode_source(std::string_view prompt) const;
    std::vector<int> encode_target(std::string_view text) const;
    std::string decode(const std::vector<int>& ids) const;

    // Summed negative log-likelihood of target + </s>, teacher forced.
    Var loss(Tape& tape, const EncodedInput& source, const std::vector<int>& target) const;

    // Log-probability of each candidate (each followed by </s>), sharing one
    // encoder pass.
    std::vector<double> score_candidates(const EncodedInput& source,
                                         const std::vector<std::vector<int>>& candidates) const;

    std::vector<int> greedy_decode(const EncodedInput& source, int max_tokens) const;

    // Adds unseen tokens and grows the embedding and output layers.
    void extend_vocabulary(const std::vector<std::string>& tokens);

    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }
    const Vocabulary& vocab() const { return vocab_; }
    const TransformerConfig& config() const { return config_; }
    const PromptTokenizer& tokenizer() const { return tokenizer_; }

private:
    struct DecoderOutputs {
        Var logits, gate, copy;
    };
    Var encode(Tape& tape, const EncodedInput& source) const;
    DecoderOutputs decode_step(Tape& tape, Var memory, const EncodedInput& source,
                               const std::vector<int>& inputs) const;

    TransformerConfig config_;
    Vocabulary vocab_;
    PromptTokenizer tokenizer_;
    ParameterSet params_;
    uint64_t seed_;
};

}  // namespace sidetect::nn
