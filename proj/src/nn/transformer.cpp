#include "sidetect/nn/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>

#include "sidetect/error.hpp"
#include "sidetect/text.hpp"

namespace sidetect::nn {

namespace {

constexpr float kMasked = -1e9f;

std::string layer_name(const std::string& prefix, int layer, const char* what) {
    return prefix + ".l" + std::to_string(layer) + "." + what;
}

void add_linear(ParameterSet& params, const std::string& name, int in, int out,
                std::mt19937_64& rng, bool bias = true) {
    params.add_normal(name + ".w", in, out, 1.0f / std::sqrt(static_cast<float>(in)), rng);
    if (bias) params.add(name + ".b", 1, out);
}

void add_norm(ParameterSet& params, const std::string& name, int d) {
    params.add_constant(name + ".g", 1, d, 1.0f);
    params.add(name + ".b", 1, d);
}

Var apply_linear(Tape& t, const ParameterSet& params, const std::string& name, Var x) {
    const std::string b = name + ".b";
    return t.linear(x, params.get(name + ".w"), params.contains(b) ? &params.get(b) : nullptr);
}

Var apply_norm(Tape& t, const ParameterSet& params, const std::string& name, Var x) {
    return t.layer_norm(x, params.get(name + ".g"), params.get(name + ".b"));
}

void add_attention(ParameterSet& params, const std::string& name, int d, std::mt19937_64& rng) {
    add_linear(params, name + ".q", d, d, rng);
    add_linear(params, name + ".k", d, d, rng);
    add_linear(params, name + ".v", d, d, rng);
    add_linear(params, name + ".o", d, d, rng);
}

Var apply_attention(Tape& t, const ParameterSet& params, const std::string& name, int heads,
                    Var query_in, Var memory_in, const Matrix* mask,
                    const Matrix* match = nullptr, const BucketBias* relative = nullptr) {
    Var q = apply_linear(t, params, name + ".q", query_in);
    Var k = apply_linear(t, params, name + ".k", memory_in);
    Var v = apply_linear(t, params, name + ".v", memory_in);
    const Parameter* bias = match != nullptr ? &params.get(name + ".match") : nullptr;
    return apply_linear(t, params, name + ".o", t.attention(q, k, v, heads, mask, bias, match, relative));
}

void add_ffn(ParameterSet& params, const std::string& name, int d, int hidden,
             std::mt19937_64& rng) {
    add_linear(params, name + ".in", d, hidden, rng);
    add_linear(params, name + ".out", hidden, d, rng);
}

Var apply_ffn(Tape& t, const ParameterSet& params, const std::string& name, Var x) {
    return apply_linear(t, params, name + ".out", t.relu(apply_linear(t, params, name + ".in", x)));
}

bool is_cjk_token(const std::string& token) {
    const auto cps = text::code_points(token);
    if (cps.size() != 1 || token.size() < 3) return false;
    const auto* b = reinterpret_cast<const unsigned char*>(token.data());
    char32_t cp = 0;
    if ((b[0] & 0xF0) == 0xE0) {
        cp = ((b[0] & 0x0F) << 12) | ((b[1] & 0x3F) << 6) | (b[2] & 0x3F);
    } else if ((b[0] & 0xF8) == 0xF0) {
        cp = ((b[0] & 0x07) << 18) | ((b[1] & 0x3F) << 12) | ((b[2] & 0x3F) << 6) | (b[3] & 0x3F);
    }
    return text::is_cjk(cp);
}

}  // namespace

json TransformerConfig::to_json() const {
    return json{{"d_model", d_model},           {"heads", heads},
                {"ffn_dim", ffn_dim},           {"encoder_layers", encoder_layers},
                {"decoder_layers", decoder_layers}, {"max_positions", max_positions},
                {"max_segments", max_segments}, {"max_source_tokens", max_source_tokens},
                {"init_std", init_std}, {"token_match_bias", token_match_bias},
                {"match_bias_init", match_bias_init}, {"relative_buckets", relative_buckets}};
}

TransformerConfig TransformerConfig::from_json(const json& j) {
    TransformerConfig c;
    c.d_model = j.value("d_model", c.d_model);
    c.heads = j.value("heads", c.heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
    c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
    c.max_positions = j.value("max_positions", c.max_positions);
    c.max_segments = j.value("max_segments", c.max_segments);
    c.max_source_tokens = j.value("max_source_tokens", c.max_source_tokens);
    c.init_std = j.value("init_std", c.init_std);
    c.token_match_bias = j.value("token_match_bias", c.token_match_bias);
    c.match_bias_init = j.value("match_bias_init", c.match_bias_init);
    c.relative_buckets = j.value("relative_buckets", c.relative_buckets);
    if (c.relative_buckets < 0 || c.relative_buckets % 2 != 0 || c.relative_buckets == 2)
        throw ConfigError("relative_buckets must be 0 or an even number above 2");
    if (c.d_model <= 0 || c.heads <= 0 || c.d_model % c.heads != 0 || c.ffn_dim <= 0 ||
        c.encoder_layers < 0 || c.decoder_layers < 0 || c.max_positions <= 0 ||
        c.max_segments <= 0 || c.max_source_tokens <= 0) {
        throw ConfigError("invalid transformer configuration");
    }
    return c;
}

// ---- tokenization ---------------------------------------------------------

PromptTokenizer::PromptTokenizer(std::vector<std::string> delimiters)
    : delimiters_(std::move(delimiters)) {
    // Longest first so that overlapping delimiters resolve to the longer one.
    std::stable_sort(delimiters_.begin(), delimiters_.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
}

std::string PromptTokenizer::delimiter_token(std::string_view delimiter) {
    return "<<" + std::string(delimiter) + ">>";
}

std::vector<PromptTokenizer::Token> PromptTokenizer::tokenize(std::string_view prompt) const {
    std::vector<Token> out;
    int segment = 0;
    int position = 0;
    auto flush = [&](std::string_view chunk) {
        for (auto& tok : text::model_tokens(chunk)) out.push_back({std::move(tok), position++, segment});
    };
    size_t chunk_start = 0;
    size_t i = 0;
    while (i < prompt.size()) {
        const std::string* hit = nullptr;
        for (const auto& d : delimiters_) {
            if (!d.empty() && prompt.substr(i, d.size()) == d) {
                hit = &d;
                break;
            }
        }
        if (hit == nullptr) {
            ++i;
            continue;
        }
        flush(prompt.substr(chunk_start, i - chunk_start));
        ++segment;
        position = 0;
        out.push_back({delimiter_token(*hit), position++, segment});
        i += hit->size();
        chunk_start = i;
    }
    flush(prompt.substr(chunk_start));
    return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
    std::string out;
    bool prev_cjk = false;
    for (size_t i = 0; i < tokens.size(); ++i) {
        const bool cjk = is_cjk_token(tokens[i]);
        if (i > 0 && !(cjk && prev_cjk)) out.push_back(' ');
        out += tokens[i];
        prev_cjk = cjk;
    }
    return out;
}

Matrix causal_mask(Eigen::Index n) {
    Matrix m = Matrix::Zero(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = r + 1; c < n; ++c) m(r, c) = kMasked;
    }
    return m;
}

// ---- layer stacks ---------------------------------------------------------

void add_encoder_layers(ParameterSet& params, const std::string& prefix,
                        const TransformerConfig& cfg, int layers, std::mt19937_64& rng) {
    for (int l = 0; l < layers; ++l) {
        add_norm(params, layer_name(prefix, l, "ln1"), cfg.d_model);
        add_attention(params, layer_name(prefix, l, "attn"), cfg.d_model, rng);
        if (cfg.token_match_bias) {
            params.add_constant(layer_name(prefix, l, "attn.match"), 1, cfg.heads, 0.0f)
                .value(0, 0) = cfg.match_bias_init;
        }
        if (cfg.relative_buckets > 0) {
            params.add_constant(layer_name(prefix, l, "attn.rel"), cfg.relative_buckets, cfg.heads, 0.0f);
        }
        add_norm(params, layer_name(prefix, l, "ln2"), cfg.d_model);
        add_ffn(params, layer_name(prefix, l, "ffn"), cfg.d_model, cfg.ffn_dim, rng);
    }
    add_norm(params, prefix + ".ln_final", cfg.d_model);
}

Matrix token_match_matrix(const std::vector<int>& query_ids, const std::vector<int>& key_ids) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(query_ids.size()),
                            static_cast<Eigen::Index>(key_ids.size()));
    for (size_t i = 0; i < query_ids.size(); ++i) {
        for (size_t j = 0; j < key_ids.size(); ++j) {
            // Unknown and padding tokens carry no identity to match on.
            if (query_ids[i] == key_ids[j] && query_ids[i] != Vocabulary::kUnk &&
                query_ids[i] != Vocabulary::kPad)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0f;
        }
    }
    return m;
}

int relative_bucket(int distance, int buckets) {
    const int half = buckets / 2;
    const int exact = std::max(1, half / 2);
    const int offset = distance > 0 ? half : 0;
    const int n = std::abs(distance);
    if (n < exact) return offset + n;
    const double scaled = std::log(static_cast<double>(n) / exact) / std::log(128.0 / exact) * (half - exact);
    return offset + std::min(half - 1, exact + static_cast<int>(scaled));
}

Var encoder_layers_forward(Tape& t, const ParameterSet& params, const std::string& prefix,
                           const TransformerConfig& cfg, int layers, Var x,
                           const std::vector<int>& ids) {
    std::optional<Matrix> match;
    if (cfg.token_match_bias) match = token_match_matrix(ids, ids);
    std::optional<Eigen::MatrixXi> buckets;
    if (cfg.relative_buckets > 0) {
        const auto n = static_cast<Eigen::Index>(ids.size());
        buckets = Eigen::MatrixXi(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                (*buckets)(i, j) = relative_bucket(static_cast<int>(j - i), cfg.relative_buckets);
    }
    for (int l = 0; l < layers; ++l) {
        Var h = apply_norm(t, params, layer_name(prefix, l, "ln1"), x);
        std::optional<BucketBias> rel;
        if (buckets) rel = BucketBias{&params.get(layer_name(prefix, l, "attn.rel")), &*buckets};
        x = t.add(x, apply_attention(t, params, layer_name(prefix, l, "attn"), cfg.heads, h, h,
                                     nullptr, match ? &*match : nullptr, rel ? &*rel : nullptr));
        h = apply_norm(t, params, layer_name(prefix, l, "ln2"), x);
        x = t.add(x, apply_ffn(t, params, layer_name(prefix, l, "ffn"), h));
    }
    return apply_norm(t, params, prefix + ".ln_final", x);
}

void add_decoder_layers(ParameterSet& params, const std::string& prefix,
                        const TransformerConfig& cfg, int layers, std::mt19937_64& rng) {
    for (int l = 0; l < layers; ++l) {
        add_norm(params, layer_name(prefix, l, "ln1"), cfg.d_model);
        add_attention(params, layer_name(prefix, l, "self"), cfg.d_model, rng);
        add_norm(params, layer_name(prefix, l, "ln2"), cfg.d_model);
        add_attention(params, layer_name(prefix, l, "cross"), cfg.d_model, rng);
        if (cfg.token_match_bias) {
            params.add_constant(layer_name(prefix, l, "cross.match"), 1, cfg.heads, 0.0f)
                .value(0, 0) = cfg.match_bias_init;
        }
        add_norm(params, layer_name(prefix, l, "ln3"), cfg.d_model);
        add_ffn(params, layer_name(prefix, l, "ffn"), cfg.d_model, cfg.ffn_dim, rng);
    }
    add_norm(params, prefix + ".ln_final", cfg.d_model);
}

Var decoder_layers_forward(Tape& t, const ParameterSet& params, const std::string& prefix,
                           const TransformerConfig& cfg, int layers, Var y, Var memory,
                           const std::vector<int>& ids, const std::vector<int>& memory_ids) {
    const Matrix mask = causal_mask(t.value(y).rows());
    std::optional<Matrix> match;
    if (cfg.token_match_bias) match = token_match_matrix(ids, memory_ids);
    for (int l = 0; l < layers; ++l) {
        Var h = apply_norm(t, params, layer_name(prefix, l, "ln1"), y);
        y = t.add(y, apply_attention(t, params, layer_name(prefix, l, "self"), cfg.heads, h, h,
                                     &mask));
        h = apply_norm(t, params, layer_name(prefix, l, "ln2"), y);
        y = t.add(y, apply_attention(t, params, layer_name(prefix, l, "cross"), cfg.heads, h,
                                     memory, nullptr, match ? &*match : nullptr));
        h = apply_norm(t, params, layer_name(prefix, l, "ln3"), y);
        y = t.add(y, apply_ffn(t, params, layer_name(prefix, l, "ffn"), h));
    }
    return apply_norm(t, params, prefix + ".ln_final", y);
}

// ---- Seq2SeqModel ---------------------------------------------------------

Seq2SeqModel::Seq2SeqModel(TransformerConfig config, Vocabulary vocab,
                           std::vector<std::string> delimiters, uint64_t seed)
    : config_(config), vocab_(std::move(vocab)), tokenizer_(std::move(delimiters)), seed_(seed) {
    for (const auto& d : tokenizer_.delimiters()) vocab_.add(PromptTokenizer::delimiter_token(d));
    std::mt19937_64 rng(seed);
    const int d = config_.d_model;
    params_.add_normal("tok_emb", vocab_.size(), d, config_.init_std, rng);
    params_.add_normal("enc_pos", config_.max_positions, d, config_.init_std, rng);
    params_.add_normal("enc_seg", config_.max_segments, d, config_.init_std, rng);
    params_.add_normal("dec_pos", config_.max_positions, d, config_.init_std, rng);
    add_encoder_layers(params_, "enc", config_, config_.encoder_layers, rng);
    add_decoder_layers(params_, "dec", config_, config_.decoder_layers, rng);
    params_.add_normal("out.w", d, vocab_.size(), config_.init_std, rng);
    params_.add("out.b", 1, vocab_.size());
    add_linear(params_, "ptr.q", d, d, rng);
    add_linear(params_, "ptr.k", d, d, rng);
    add_linear(params_, "gate", d, 1, rng);
}

Seq2SeqModel Seq2SeqModel::load(const std::filesystem::path& dir) {
    json meta;
    try {
        meta = json::parse(io::read_file(dir / "model.json"));
    } catch (const json::parse_error& e) {
        throw DataError("invalid model.json in " + dir.string() + ": " + e.what());
    }
    Seq2SeqModel model(TransformerConfig::from_json(meta.at("config")),
                       Vocabulary::from_json(meta.at("vocab")),
                       meta.at("delimiters").get<std::vector<std::string>>(),
                       meta.value("seed", uint64_t{0}));
    std::ifstream in(dir / "params.bin", std::ios::binary);
    if (!in) throw DataError("missing params.bin in " + dir.string());
    model.params_.load(in);
    return model;
}

void Seq2SeqModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    json meta{{"kind", "seq2seq"},
              {"config", config_.to_json()},
              {"delimiters", tokenizer_.delimiters()},
              {"seed", seed_},
              {"vocab", vocab_.to_json()}};
    io::write_file(dir / "model.json", meta.dump() + "\n");
    std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
    params_.save(out);
    if (!out) throw DataError("failed writing " + (dir / "params.bin").string());
}

EncodedInput Seq2SeqModel::encode_source(std::string_view prompt) const {
    auto tokens = tokenizer_.tokenize(prompt);
    const auto cap = static_cast<size_t>(config_.max_source_tokens);
    const size_t skip = tokens.size() > cap ? tokens.size() - cap : 0;
    EncodedInput in;
    for (size_t i = skip; i < tokens.size(); ++i) {
        in.ids.push_back(vocab_.id(tokens[i].text));
        in.positions.push_back(std::min(tokens[i].position, config_.max_positions - 1));
        in.segments.push_back(std::min(tokens[i].segment, config_.max_segments - 1));
    }
    if (in.ids.empty()) {
        in.ids.push_back(Vocabulary::kUnk);
        in.positions.push_back(0);
        in.segments.push_back(0);
    }
    return in;
}

std::vector<int> Seq2SeqModel::encode_target(std::string_view text) const {
    auto ids = vocab_.encode(text::model_tokens(text));
    const auto cap = static_cast<size_t>(config_.max_positions - 1);
    if (ids.size() > cap) ids.resize(cap);
    return ids;
}

std::string Seq2SeqModel::decode(const std::vector<int>& ids) const {
    std::vector<std::string> tokens;
    for (int id : ids) {
        if (id == Vocabulary::kEos) break;
        if (id == Vocabulary::kBos || id == Vocabulary::kPad) continue;
        tokens.push_back(vocab_.token(id));
    }
    return detokenize(tokens);
}

Var Seq2SeqModel::encode(Tape& t, const EncodedInput& source) const {
    Var x = t.add(t.embed(params_.get("tok_emb"), source.ids),
                  t.embed(params_.get("enc_pos"), source.positions));
    x = t.add(x, t.embed(params_.get("enc_seg"), source.segments));
    return encoder_layers_forward(t, params_, "enc", config_, config_.encoder_layers, x,
                                  source.ids);
}

Seq2SeqModel::DecoderOutputs Seq2SeqModel::decode_step(Tape& t, Var memory,
                                                       const EncodedInput& source,
                                                       const std::vector<int>& inputs) const {
    std::vector<int> positions(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i) {
        positions[i] = std::min(static_cast<int>(i), config_.max_positions - 1);
    }
    Var y = t.add(t.embed(params_.get("tok_emb"), inputs), t.embed(params_.get("dec_pos"), positions));
    y = decoder_layers_forward(t, params_, "dec", config_, config_.decoder_layers, y, memory,
                               inputs, source.ids);
    DecoderOutputs out;
    out.logits = apply_linear(t, params_, "out", y);
    out.gate = apply_linear(t, params_, "gate", y);
    out.copy = t.attention_weights(apply_linear(t, params_, "ptr.q", y),
                                   apply_linear(t, params_, "ptr.k", memory), nullptr);
    return out;
}

Var Seq2SeqModel::loss(Tape& t, const EncodedInput& source, const std::vector<int>& target) const {
    Var memory = encode(t, source);
    std::vector<int> inputs{Vocabulary::kBos};
    inputs.insert(inputs.end(), target.begin(), target.end());
    std::vector<int> expected(target.begin(), target.end());
    expected.push_back(Vocabulary::kEos);
    auto out = decode_step(t, memory, source, inputs);
    return t.pointer_nll(out.logits, out.gate, out.copy, source.ids, expected);
}

std::vector<double> Seq2SeqModel::score_candidates(
    const EncodedInput& source, const std::vector<std::vector<int>>& candidates) const {
    Tape t;
    Var memory = encode(t, source);
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (const auto& cand : candidates) {
        std::vector<int> inputs{Vocabulary::kBos};
        inputs.insert(inputs.end(), cand.begin(), cand.end());
        std::vector<int> expected(cand.begin(), cand.end());
        expected.push_back(Vocabulary::kEos);
        auto out = decode_step(t, memory, source, inputs);
        scores.push_back(-static_cast<double>(
            t.value(t.pointer_nll(out.logits, out.gate, out.copy, source.ids, expected))(0, 0)));
    }
    return scores;
}

std::vector<int> Seq2SeqModel::greedy_decode(const EncodedInput& source, int max_tokens) const {
    Tape t;
    Var memory = encode(t, source);
    std::vector<int> inputs{Vocabulary::kBos};
    std::vector<int> produced;
    const int limit = std::min(max_tokens, config_.max_positions - 1);
    for (int step = 0; step < limit; ++step) {
        auto out = decode_step(t, memory, source, inputs);
        const Eigen::Index last = static_cast<Eigen::Index>(inputs.size()) - 1;
        const Eigen::VectorXf lp =
            pointer_log_probs(t.value(out.logits).row(last), t.value(out.gate)(last, 0),
                              t.value(out.copy).row(last), source.ids);
        Eigen::Index best = 0;
        lp.maxCoeff(&best);
        const int id = static_cast<int>(best);
        if (id == Vocabulary::kEos) break;
        produced.push_back(id);
        inputs.push_back(id);
    }
    return produced;
}

void Seq2SeqModel::extend_vocabulary(const std::vector<std::string>& tokens) {
    const int before = vocab_.size();
    for (const auto& tok : tokens) vocab_.add(tok);
    const int after = vocab_.size();
    if (after == before) return;
    std::mt19937_64 rng(seed_ ^ static_cast<uint64_t>(after));
    std::normal_distribution<float> dist(0.0f, config_.init_std);
    Parameter& emb = params_.get("tok_emb");
    Parameter& out_w = params_.get("out.w");
    Parameter& out_b = params_.get("out.b");
    emb.value.conservativeResize(after, Eigen::NoChange);
    out_w.value.conservativeResize(Eigen::NoChange, after);
    out_b.value.conservativeResize(Eigen::NoChange, after);
    for (int r = before; r < after; ++r) {
        for (Eigen::Index c = 0; c < emb.value.cols(); ++c) emb.value(r, c) = dist(rng);
        for (Eigen::Index c = 0; c < out_w.value.rows(); ++c) out_w.value(c, r) = dist(rng);
        out_b.value(0, r) = 0.0f;
    }
}

}  // namespace sidetect::nn
