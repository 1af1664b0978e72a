#include "sidetect/nn/tape.hpp"

#include <cmath>
#include <istream>
#include <optional>
#include <ostream>

#include "sidetect/error.hpp"

namespace sidetect::nn {

namespace {

constexpr float kLayerNormEps = 1e-5f;
constexpr float kProbFloor = 1e-12f;

void softmax_rows_inplace(Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        const float mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        row /= row.sum();
    }
}

// dS = P * (dP - rowsum(dP * P))
Matrix softmax_backward(const Matrix& probs, const Matrix& dprobs) {
    Matrix ds = probs.cwiseProduct(dprobs);
    const Eigen::VectorXf dots = ds.rowwise().sum();
    ds -= probs.array().colwise().operator*(dots.array()).matrix();
    return ds;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("truncated model file");
    return v;
}

void write_matrix(std::ostream& out, const Matrix& m) {
    write_pod<int64_t>(out, m.rows());
    write_pod<int64_t>(out, m.cols());
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(float)));
}

Matrix read_matrix(std::istream& in) {
    const auto rows = read_pod<int64_t>(in);
    const auto cols = read_pod<int64_t>(in);
    if (rows < 0 || cols < 0 || rows * cols > (int64_t{1} << 32)) {
        throw DataError("corrupt matrix header in model file");
    }
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!in) throw DataError("truncated model file");
    return m;
}

}  // namespace

// ---- ParameterSet ---------------------------------------------------------

Parameter& ParameterSet::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    if (by_name_.contains(name)) throw Error("duplicate parameter " + name);
    auto p = std::make_unique<Parameter>();
    p->name = std::move(name);
    p->value = Matrix::Zero(rows, cols);
    Parameter& ref = *p;
    by_name_[ref.name] = &ref;
    params_.push_back(std::move(p));
    return ref;
}

Parameter& ParameterSet::add_normal(std::string name, Eigen::Index rows, Eigen::Index cols,
                                    float stddev, std::mt19937_64& rng) {
    Parameter& p = add(std::move(name), rows, cols);
    std::normal_distribution<float> dist(0.0f, stddev);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
    return p;
}

Parameter& ParameterSet::add_constant(std::string name, Eigen::Index rows, Eigen::Index cols,
                                      float value) {
    Parameter& p = add(std::move(name), rows, cols);
    p.value.setConstant(value);
    return p;
}

Parameter& ParameterSet::get(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw Error("unknown parameter " + name);
    return *it->second;
}

const Parameter& ParameterSet::get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw Error("unknown parameter " + name);
    return *it->second;
}

bool ParameterSet::contains(const std::string& name) const { return by_name_.contains(name); }

size_t ParameterSet::scalar_count() const {
    size_t n = 0;
    for (const auto& p : params_) n += static_cast<size_t>(p->value.size());
    return n;
}

void ParameterSet::save(std::ostream& out) const {
    write_pod<uint64_t>(out, params_.size());
    for (const auto& p : params_) {
        write_pod<uint64_t>(out, p->name.size());
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_matrix(out, p->value);
    }
}

void ParameterSet::load(std::istream& in) {
    const auto count = read_pod<uint64_t>(in);
    for (uint64_t i = 0; i < count; ++i) {
        const auto len = read_pod<uint64_t>(in);
        if (len > 4096) throw DataError("corrupt parameter name in model file");
        std::string name(len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(len));
        Matrix m = read_matrix(in);
        Parameter& p = get(name);
        if (p.value.rows() != m.rows() || p.value.cols() != m.cols()) {
            throw DataError("shape mismatch for parameter " + name);
        }
        p.value = std::move(m);
    }
}

// ---- Gradients ------------------------------------------------------------

Matrix& Gradients::at(const Parameter& p) {
    auto it = grads_.find(&p);
    if (it == grads_.end()) {
        it = grads_.emplace(&p, Matrix::Zero(p.value.rows(), p.value.cols())).first;
    }
    return it->second;
}

const Matrix* Gradients::find(const Parameter& p) const {
    auto it = grads_.find(&p);
    return it == grads_.end() ? nullptr : &it->second;
}

void Gradients::add(const Gradients& other) {
    for (const auto& [p, g] : other.grads_) {
        auto it = grads_.find(p);
        if (it == grads_.end()) {
            grads_.emplace(p, g);
        } else {
            it->second += g;
        }
    }
}

void Gradients::scale(float factor) {
    for (auto& [_, g] : grads_) g *= factor;
}

double Gradients::squared_norm() const {
    double total = 0.0;
    for (const auto& [_, g] : grads_) total += static_cast<double>(g.squaredNorm());
    return total;
}

// ---- Tape -----------------------------------------------------------------

Var Tape::push(Matrix value, std::function<void(Tape&, Gradients&)> backward) {
    nodes_.push_back(Node{std::move(value), Matrix{}, std::move(backward)});
    return Var{static_cast<int>(nodes_.size() - 1)};
}

Matrix& Tape::grad(Var v) {
    Node& n = node(v);
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Tape::constant(Matrix value) { return push(std::move(value)); }

Var Tape::param(const Parameter& p) {
    Var out = push(p.value);
    node(out).backward = [out, &p](Tape& t, Gradients& g) { g.at(p) += t.node(out).grad; };
    return out;
}

Var Tape::embed(const Parameter& table, std::span<const int> ids) {
    Matrix value(static_cast<Eigen::Index>(ids.size()), table.value.cols());
    for (size_t i = 0; i < ids.size(); ++i) {
        const int id = ids[i];
        if (id < 0 || id >= table.value.rows()) throw Error("embedding id out of range");
        value.row(static_cast<Eigen::Index>(i)) = table.value.row(id);
    }
    std::vector<int> captured(ids.begin(), ids.end());
    Var out = push(std::move(value));
    node(out).backward = [out, &table, captured](Tape& t, Gradients& g) {
        Matrix& dtable = g.at(table);
        const Matrix& dy = t.node(out).grad;
        for (size_t i = 0; i < captured.size(); ++i) {
            dtable.row(captured[i]) += dy.row(static_cast<Eigen::Index>(i));
        }
    };
    return out;
}

Var Tape::linear(Var x, const Parameter& weight, const Parameter* bias) {
    Matrix value = this->value(x) * weight.value;
    if (bias != nullptr) value.rowwise() += bias->value.row(0);
    Var out = push(std::move(value));
    node(out).backward = [out, x, &weight, bias](Tape& t, Gradients& g) {
        const Matrix& dy = t.node(out).grad;
        const Matrix& xv = t.node(x).value;
        g.at(weight).noalias() += xv.transpose() * dy;
        if (bias != nullptr) g.at(*bias) += dy.colwise().sum();
        t.grad(x).noalias() += dy * weight.value.transpose();
    };
    return out;
}

Var Tape::add(Var a, Var b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    const bool broadcast = bv.rows() == 1 && av.rows() != 1;
    if (av.cols() != bv.cols() || (!broadcast && av.rows() != bv.rows())) {
        throw Error("add: shape mismatch");
    }
    Matrix sum = av;
    if (broadcast) {
        sum.rowwise() += bv.row(0);
    } else {
        sum += bv;
    }
    Var out = push(std::move(sum));
    node(out).backward = [out, a, b, broadcast](Tape& t, Gradients&) {
        const Matrix dy = t.node(out).grad;
        t.grad(a) += dy;
        if (broadcast) {
            t.grad(b) += dy.colwise().sum();
        } else {
            t.grad(b) += dy;
        }
    };
    return out;
}

Var Tape::scale(Var a, float factor) {
    Var out = push(value(a) * factor);
    node(out).backward = [out, a, factor](Tape& t, Gradients&) {
        t.grad(a) += t.node(out).grad * factor;
    };
    return out;
}

Var Tape::relu(Var a) {
    Var out = push(value(a).cwiseMax(0.0f));
    node(out).backward = [out, a](Tape& t, Gradients&) {
        const Matrix& x = t.node(a).value;
        t.grad(a) += (x.array() > 0.0f).select(t.node(out).grad, 0.0f).matrix();
    };
    return out;
}

Var Tape::tanh(Var a) {
    Var out = push(value(a).array().tanh().matrix());
    node(out).backward = [out, a](Tape& t, Gradients&) {
        const Matrix& y = t.node(out).value;
        t.grad(a) += t.node(out).grad.cwiseProduct((1.0f - y.array().square()).matrix());
    };
    return out;
}

Var Tape::layer_norm(Var x, const Parameter& gain, const Parameter& bias) {
    const Matrix& xv = value(x);
    const Eigen::Index n = xv.rows();
    const Eigen::Index d = xv.cols();
    Matrix xhat(n, d);
    Eigen::VectorXf inv_std(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const float mean = xv.row(r).mean();
        const float var = (xv.row(r).array() - mean).square().mean();
        inv_std(r) = 1.0f / std::sqrt(var + kLayerNormEps);
        xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
    }
    Matrix y = xhat.array().rowwise() * gain.value.row(0).array();
    y.rowwise() += bias.value.row(0);
    Var out = push(std::move(y));
    node(out).backward = [out, x, &gain, &bias, xhat = std::move(xhat),
                          inv_std = std::move(inv_std)](Tape& t, Gradients& g) {
        const Matrix& dy = t.node(out).grad;
        g.at(gain) += dy.cwiseProduct(xhat).colwise().sum();
        g.at(bias) += dy.colwise().sum();
        Matrix dxhat = dy.array().rowwise() * gain.value.row(0).array();
        Matrix& dx = t.grad(x);
        for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
            const float m1 = dxhat.row(r).mean();
            const float m2 = dxhat.row(r).dot(xhat.row(r)) / static_cast<float>(dxhat.cols());
            dx.row(r).array() +=
                inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
        }
    };
    return out;
}

Var Tape::attention(Var q, Var k, Var v, int heads, const Matrix* mask,
                    const Parameter* match_bias, const Matrix* match, const BucketBias* relative) {
    const Matrix& qv = value(q);
    const Matrix& kv = value(k);
    const Matrix& vv = value(v);
    const Eigen::Index d = qv.cols();
    if (heads <= 0 || d % heads != 0 || kv.cols() != d || vv.cols() != d ||
        kv.rows() != vv.rows()) {
        throw Error("attention: shape mismatch");
    }
    if (match_bias != nullptr &&
        (match == nullptr || match->rows() != qv.rows() || match->cols() != kv.rows() ||
         match_bias->value.cols() != heads)) {
        throw Error("attention: match bias shape mismatch");
    }
    if (relative != nullptr &&
        (relative->table == nullptr || relative->buckets == nullptr ||
         relative->buckets->rows() != qv.rows() || relative->buckets->cols() != kv.rows() ||
         relative->table->value.cols() != heads)) {
        throw Error("attention: relative bias shape mismatch");
    }
    const Eigen::Index dh = d / heads;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
    std::vector<Matrix> probs(static_cast<size_t>(heads));
    Matrix outv(qv.rows(), d);
    for (int h = 0; h < heads; ++h) {
        const Eigen::Index c0 = h * dh;
        Matrix s = (qv.middleCols(c0, dh) * kv.middleCols(c0, dh).transpose()) * inv_sqrt;
        if (mask != nullptr) s += *mask;
        if (match_bias != nullptr) s += match_bias->value(0, h) * (*match);
        if (relative != nullptr) {
            const auto& b = *relative->buckets;
            for (Eigen::Index i = 0; i < s.rows(); ++i)
                for (Eigen::Index j = 0; j < s.cols(); ++j)
                    if (b(i, j) >= 0) s(i, j) += relative->table->value(b(i, j), h);
        }
        softmax_rows_inplace(s);
        outv.middleCols(c0, dh).noalias() = s * vv.middleCols(c0, dh);
        probs[static_cast<size_t>(h)] = std::move(s);
    }
    std::optional<Matrix> match_copy;
    if (match_bias != nullptr) match_copy = *match;
    std::optional<BucketBias> rel;
    std::optional<Eigen::MatrixXi> rel_buckets;
    if (relative != nullptr) {
        rel = *relative;
        rel_buckets = *relative->buckets;
    }
    Var out = push(std::move(outv));
    node(out).backward = [out, q, k, v, heads, dh, inv_sqrt, probs = std::move(probs),
                          match_bias, match_copy = std::move(match_copy), rel,
                          rel_buckets = std::move(rel_buckets)](Tape& t, Gradients& g) {
        const Matrix dy = t.node(out).grad;
        const Matrix& qv2 = t.node(q).value;
        const Matrix& kv2 = t.node(k).value;
        const Matrix& vv2 = t.node(v).value;
        Matrix dq = Matrix::Zero(qv2.rows(), qv2.cols());
        Matrix dk = Matrix::Zero(kv2.rows(), kv2.cols());
        Matrix dv = Matrix::Zero(vv2.rows(), vv2.cols());
        for (int h = 0; h < heads; ++h) {
            const Eigen::Index c0 = h * dh;
            const Matrix& p = probs[static_cast<size_t>(h)];
            const auto dyh = dy.middleCols(c0, dh);
            dv.middleCols(c0, dh).noalias() += p.transpose() * dyh;
            const Matrix dp = dyh * vv2.middleCols(c0, dh).transpose();
            Matrix ds = softmax_backward(p, dp);
            if (match_bias != nullptr) g.at(*match_bias)(0, h) += ds.cwiseProduct(*match_copy).sum();
            if (rel) {
                Matrix& gt = g.at(*rel->table);
                for (Eigen::Index i = 0; i < ds.rows(); ++i)
                    for (Eigen::Index j = 0; j < ds.cols(); ++j)
                        if ((*rel_buckets)(i, j) >= 0) gt((*rel_buckets)(i, j), h) += ds(i, j);
            }
            ds *= inv_sqrt;
            dq.middleCols(c0, dh).noalias() += ds * kv2.middleCols(c0, dh);
            dk.middleCols(c0, dh).noalias() += ds.transpose() * qv2.middleCols(c0, dh);
        }
        t.grad(q) += dq;
        t.grad(k) += dk;
        t.grad(v) += dv;
    };
    return out;
}

Var Tape::attention_weights(Var q, Var k, const Matrix* mask) {
    const Matrix& qv = value(q);
    const Matrix& kv = value(k);
    if (qv.cols() != kv.cols()) throw Error("attention_weights: shape mismatch");
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(qv.cols()));
    Matrix s = (qv * kv.transpose()) * inv_sqrt;
    if (mask != nullptr) s += *mask;
    softmax_rows_inplace(s);
    Var out = push(std::move(s));
    node(out).backward = [out, q, k, inv_sqrt](Tape& t, Gradients&) {
        const Matrix ds = softmax_backward(t.node(out).value, t.node(out).grad) * inv_sqrt;
        const Matrix qv2 = t.node(q).value;
        const Matrix kv2 = t.node(k).value;
        t.grad(q).noalias() += ds * kv2;
        t.grad(k).noalias() += ds.transpose() * qv2;
    };
    return out;
}

Var Tape::mean_rows(Var x) {
    const Matrix& xv = value(x);
    Var out = push(xv.colwise().mean());
    node(out).backward = [out, x](Tape& t, Gradients&) {
        Matrix& dx = t.grad(x);
        const Eigen::RowVectorXf dy =
            t.node(out).grad.row(0) / static_cast<float>(dx.rows());
        dx.rowwise() += dy;
    };
    return out;
}

Var Tape::row(Var x, Eigen::Index r) {
    Var out = push(value(x).row(r));
    node(out).backward = [out, x, r](Tape& t, Gradients&) {
        t.grad(x).row(r) += t.node(out).grad.row(0);
    };
    return out;
}

Var Tape::softmax_cross_entropy(Var logits, std::span<const int> targets) {
    Matrix p = value(logits);
    if (static_cast<size_t>(p.rows()) != targets.size()) {
        throw Error("softmax_cross_entropy: target count mismatch");
    }
    softmax_rows_inplace(p);
    double loss = 0.0;
    for (size_t i = 0; i < targets.size(); ++i) {
        loss -= std::log(std::max(p(static_cast<Eigen::Index>(i), targets[i]), kProbFloor));
    }
    const float n = static_cast<float>(targets.size());
    Matrix lv(1, 1);
    lv(0, 0) = static_cast<float>(loss / n);
    std::vector<int> captured(targets.begin(), targets.end());
    Var out = push(std::move(lv));
    node(out).backward = [out, logits, p = std::move(p), captured, n](Tape& t, Gradients&) {
        const float g = t.node(out).grad(0, 0) / n;
        Matrix d = p;
        for (size_t i = 0; i < captured.size(); ++i) {
            d(static_cast<Eigen::Index>(i), captured[i]) -= 1.0f;
        }
        t.grad(logits) += d * g;
    };
    return out;
}

Var Tape::pointer_nll(Var logits, Var gate, Var copy_attention, std::span<const int> source_ids,
                      std::span<const int> targets) {
    Matrix probs = value(logits);
    const Matrix& gv = value(gate);
    const Matrix& av = value(copy_attention);
    const auto rows = static_cast<Eigen::Index>(targets.size());
    if (probs.rows() != rows || gv.rows() != rows || av.rows() != rows ||
        av.cols() != static_cast<Eigen::Index>(source_ids.size())) {
        throw Error("pointer_nll: shape mismatch");
    }
    softmax_rows_inplace(probs);
    Eigen::VectorXf sig(rows), copy_mass(rows), p_target(rows);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
        const int y = targets[static_cast<size_t>(i)];
        sig(i) = 1.0f / (1.0f + std::exp(-gv(i, 0)));
        float c = 0.0f;
        for (size_t s = 0; s < source_ids.size(); ++s) {
            if (source_ids[s] == y) c += av(i, static_cast<Eigen::Index>(s));
        }
        copy_mass(i) = c;
        p_target(i) = sig(i) * probs(i, y) + (1.0f - sig(i)) * c + kProbFloor;
        loss -= std::log(p_target(i));
    }
    Matrix lv(1, 1);
    lv(0, 0) = static_cast<float>(loss);
    std::vector<int> src(source_ids.begin(), source_ids.end());
    std::vector<int> tgt(targets.begin(), targets.end());
    Var out = push(std::move(lv));
    node(out).backward = [out, logits, gate, copy_attention, probs = std::move(probs),
                          sig = std::move(sig), copy_mass = std::move(copy_mass),
                          p_target = std::move(p_target), src = std::move(src),
                          tgt = std::move(tgt)](Tape& t, Gradients&) {
        const float g = t.node(out).grad(0, 0);
        Matrix& dlogits = t.grad(logits);
        Matrix& dgate = t.grad(gate);
        Matrix& dattn = t.grad(copy_attention);
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
            const int y = tgt[static_cast<size_t>(i)];
            const float inv_p = g / p_target(i);
            const float py = probs(i, y);
            // d(-log p)/d logits_v = -(s/p) * P_y * (delta_vy - P_v)
            const float coef = sig(i) * py * inv_p;
            dlogits.row(i) += coef * probs.row(i);
            dlogits(i, y) -= coef;
            dgate(i, 0) += -(py - copy_mass(i)) * inv_p * sig(i) * (1.0f - sig(i));
            const float dcopy = -(1.0f - sig(i)) * inv_p;
            for (size_t s = 0; s < src.size(); ++s) {
                if (src[s] == y) dattn(i, static_cast<Eigen::Index>(s)) += dcopy;
            }
        }
    };
    return out;
}

void Tape::backward(Var loss, Gradients& grads) {
    Node& l = node(loss);
    if (l.value.size() != 1) throw Error("backward: loss must be a scalar");
    l.grad = Matrix::Ones(1, 1);
    for (auto i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.backward && n.grad.size() != 0) n.backward(*this, grads);
    }
}

Eigen::VectorXf pointer_log_probs(const Eigen::Ref<const Eigen::RowVectorXf>& logits, float gate,
                                  const Eigen::Ref<const Eigen::RowVectorXf>& copy_attention,
                                  std::span<const int> source_ids) {
    Eigen::VectorXf p = logits.transpose();
    p = (p.array() - p.maxCoeff()).exp();
    p /= p.sum();
    const float s = 1.0f / (1.0f + std::exp(-gate));
    p *= s;
    for (size_t i = 0; i < source_ids.size(); ++i) {
        p(source_ids[i]) += (1.0f - s) * copy_attention(static_cast<Eigen::Index>(i));
    }
    return (p.array() + kProbFloor).log().matrix();
}

// ---- Adam -----------------------------------------------------------------

void Adam::step(ParameterSet& params, const Gradients& grads, float learning_rate) {
    ++step_;
    float clip = 1.0f;
    if (options_.clip_norm > 0.0f) {
        const double norm = std::sqrt(grads.squared_norm());
        if (norm > options_.clip_norm) clip = static_cast<float>(options_.clip_norm / norm);
    }
    const float bc1 = 1.0f - std::pow(options_.beta1, static_cast<float>(step_));
    const float bc2 = 1.0f - std::pow(options_.beta2, static_cast<float>(step_));
    for (const auto& p : params.all()) {
        const Matrix* g = grads.find(*p);
        if (g == nullptr) continue;
        auto [it, inserted] = moments_.try_emplace(p.get());
        if (inserted) {
            it->second.first = Matrix::Zero(p->value.rows(), p->value.cols());
            it->second.second = Matrix::Zero(p->value.rows(), p->value.cols());
        }
        Matrix& m = it->second.first;
        Matrix& v = it->second.second;
        m = options_.beta1 * m + (1.0f - options_.beta1) * clip * (*g);
        v = options_.beta2 * v + (1.0f - options_.beta2) * (clip * (*g)).cwiseAbs2();
        const auto update = (m.array() / bc1) / ((v.array() / bc2).sqrt() + options_.epsilon);
        if (options_.weight_decay > 0.0f) {
            p->value.array() -= learning_rate * options_.weight_decay * p->value.array();
        }
        p->value.array() -= learning_rate * update;
    }
}

void Adam::save(std::ostream& out, const ParameterSet& params) const {
    write_pod<int64_t>(out, step_);
    for (const auto& p : params.all()) {
        auto it = moments_.find(p.get());
        write_pod<uint8_t>(out, it == moments_.end() ? 0 : 1);
        if (it != moments_.end()) {
            write_matrix(out, it->second.first);
            write_matrix(out, it->second.second);
        }
    }
}

void Adam::load(std::istream& in, const ParameterSet& params) {
    moments_.clear();
    step_ = read_pod<int64_t>(in);
    for (const auto& p : params.all()) {
        if (read_pod<uint8_t>(in) == 0) continue;
        Matrix m = read_matrix(in);
        Matrix v = read_matrix(in);
        if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
            throw DataError("optimizer state shape mismatch for " + p->name);
        }
        moments_.emplace(p.get(), std::make_pair(std::move(m), std::move(v)));
    }
}

}  // namespace sidetect::nn
