#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

// Minimal reverse-mode differentiation over row-major float matrices. A Tape
// records one forward pass; backward() walks it in reverse and accumulates
// parameter gradients into a Gradients buffer.
namespace sidetect::nn {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
    std::string name;
    Matrix value;
};

class ParameterSet {
public:
    Parameter& add(std::string name, Eigen::Index rows, Eigen::Index cols);
    Parameter& add_normal(std::string name, Eigen::Index rows, Eigen::Index cols, float stddev,
                          std::mt19937_64& rng);
    Parameter& add_constant(std::string name, Eigen::Index rows, Eigen::Index cols, float value);

    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
    size_t scalar_count() const;

    // Binary format: count, then per parameter name, rows, cols, floats.
    void save(std::ostream& out) const;
    // Loads values by name; shapes must match.
    void load(std::istream& in);

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::unordered_map<std::string, Parameter*> by_name_;
};

class Gradients {
public:
    Matrix& at(const Parameter& p);
    const Matrix* find(const Parameter& p) const;
    void clear() { grads_.clear(); }
    void add(const Gradients& other);
    void scale(float factor);
    double squared_norm() const;
    const std::unordered_map<const Parameter*, Matrix>& all() const { return grads_; }

private:
    std::unordered_map<const Parameter*, Matrix> grads_;
};

// Learned additive attention bias looked up by a per-pair bucket index.
struct BucketBias {
    const Parameter* table = nullptr;         // buckets x heads
    const Eigen::MatrixXi* buckets = nullptr;  // queries x keys, -1 for none
};

class Tape;

struct Var {
    int index = -1;
};

class Tape {
public:
    Var constant(Matrix value);

    const Matrix& value(Var v) const { return nodes_[static_cast<size_t>(v.index)].value; }
    Matrix& grad(Var v);

    // Differentiable operations.
    Var param(const Parameter& p);
    Var embed(const Parameter& table, std::span<const int> ids);
    Var linear(Var x, const Parameter& weight, const Parameter* bias);
    Var add(Var a, Var b);
    Var scale(Var a, float factor);
    Var relu(Var a);
    Var tanh(Var a);
    Var layer_norm(Var x, const Parameter& gain, const Parameter& bias);
    // Multi-head scaled dot-product attention over already projected q/k/v.
    // `mask` is additive (rows = queries, cols = keys) or null.
    // When `match_bias` (1 x heads) is given, head h adds match_bias[h] to
    // the logit of every (query, key) pair flagged in `match` (0/1 matrix).
    // When `relative` is given, head h adds table(bucket(i, j), h) for every
    // pair with a non-negative bucket.
    Var attention(Var q, Var k, Var v, int heads, const Matrix* mask,
                  const Parameter* match_bias = nullptr, const Matrix* match = nullptr,
                  const BucketBias* relative = nullptr);
    // Single-head attention weights softmax(q k^T / sqrt(d) + mask).
    Var attention_weights(Var q, Var k, const Matrix* mask);
    Var mean_rows(Var x);
    Var row(Var x, Eigen::Index r);

    // Mean cross-entropy of row-wise softmax(logits) against targets.
    Var softmax_cross_entropy(Var logits, std::span<const int> targets);

    // Pointer-generator output: p = s * softmax(logits) + (1 - s) * copy,
    // s = sigmoid(gate), copy[v] = sum of attention on source positions
    // holding token v. Returns the summed negative log-likelihood of targets.
    Var pointer_nll(Var logits, Var gate, Var copy_attention, std::span<const int> source_ids,
                    std::span<const int> targets);

    void backward(Var loss, Gradients& grads);
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void(Tape&, Gradients&)> backward;
    };
    Var push(Matrix value, std::function<void(Tape&, Gradients&)> backward = {});
    Node& node(Var v) { return nodes_[static_cast<size_t>(v.index)]; }

    std::deque<Node> nodes_;
};

// Forward-only pointer-generator log-probabilities for one row.
Eigen::VectorXf pointer_log_probs(const Eigen::Ref<const Eigen::RowVectorXf>& logits, float gate,
                                  const Eigen::Ref<const Eigen::RowVectorXf>& copy_attention,
                                  std::span<const int> source_ids);

class Adam {
public:
    struct Options {
        float beta1 = 0.9f;
        float beta2 = 0.999f;
        float epsilon = 1e-8f;
        float weight_decay = 0.0f;
        float clip_norm = 1.0f;  // global gradient norm, <= 0 disables
    };

    Adam() = default;
    explicit Adam(Options options) : options_(options) {}

    void step(ParameterSet& params, const Gradients& grads, float learning_rate);
    int64_t steps() const { return step_; }

    void save(std::ostream& out, const ParameterSet& params) const;
    void load(std::istream& in, const ParameterSet& params);

private:
    Options options_;
    int64_t step_ = 0;
    std::unordered_map<const Parameter*, std::pair<Matrix, Matrix>> moments_;
};

}  // namespace sidetect::nn
