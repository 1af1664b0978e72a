#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sidetect/io.hpp"

namespace sidetect::nn {

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;

    Vocabulary();

    // Absent tokens map to kUnk, or to a stable hash bucket once buckets
    // are enabled, so unseen words keep a distinct identity.
    int id(std::string_view token) const;
    void enable_hash_buckets(int count);
    int hash_buckets() const { return buckets_; }
    int add(const std::string& token);     // existing id when present
    bool contains(std::string_view token) const;
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }

    std::vector<int> encode(const std::vector<std::string>& tokens) const;

    json to_json() const;
    static Vocabulary from_json(const json& j);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
    int buckets_ = 0;
    int first_bucket_ = 0;
};

}  // namespace sidetect::nn
