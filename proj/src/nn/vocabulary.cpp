#include "sidetect/nn/vocabulary.hpp"

#include "sidetect/error.hpp"
#include "sidetect/io.hpp"

namespace sidetect::nn {

Vocabulary::Vocabulary() {
    for (const char* special : {"<pad>", "<unk>", "<s>", "</s>"}) add(special);
}

int Vocabulary::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it != ids_.end()) return it->second;
    if (buckets_ == 0) return kUnk;
    return first_bucket_ + static_cast<int>(io::stable_hash64(token) % static_cast<uint64_t>(buckets_));
}

void Vocabulary::enable_hash_buckets(int count) {
    if (count <= 0) throw ConfigError("hash bucket count must be positive");
    if (buckets_ > 0) throw ConfigError("hash buckets already enabled");
    first_bucket_ = size();
    for (int i = 0; i < count; ++i) add("<oov:" + std::to_string(i) + ">");
    buckets_ = count;
}

int Vocabulary::add(const std::string& token) {
    auto [it, inserted] = ids_.try_emplace(token, static_cast<int>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
}

bool Vocabulary::contains(std::string_view token) const {
    return ids_.contains(std::string(token));
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw Error("token id out of range");
    return tokens_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
}

json Vocabulary::to_json() const {
    if (buckets_ == 0) return json(tokens_);
    return json{{"tokens", tokens_}, {"hash_buckets", buckets_}, {"first_bucket", first_bucket_}};
}

Vocabulary Vocabulary::from_json(const json& j) {
    Vocabulary v;
    const json& list = j.is_object() ? j.at("tokens") : j;
    if (!list.is_array()) throw DataError("vocabulary must be a JSON array");
    const auto tokens = list.get<std::vector<std::string>>();
    if (tokens.size() < 4 || tokens[0] != "<pad>" || tokens[3] != "</s>") {
        throw DataError("vocabulary is missing the reserved tokens");
    }
    for (const auto& t : tokens) v.add(t);
    if (v.size() != static_cast<int>(tokens.size())) throw DataError("duplicate vocabulary entry");
    if (j.is_object()) {
        v.buckets_ = j.value("hash_buckets", 0);
        v.first_bucket_ = j.value("first_bucket", 0);
    }
    return v;
}

}  // namespace sidetect::nn
