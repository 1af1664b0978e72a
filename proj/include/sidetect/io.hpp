#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace sidetect {

using json = nlohmann::ordered_json;

namespace io {

std::string sha256_hex(std::string_view data);

// First 8 bytes of SHA-256, big-endian. Stable across platforms and runs.
uint64_t stable_hash64(std::string_view data);

std::string read_file(const std::filesystem::path& path);

// Writes via a sibling temp file and rename, so readers never see partial files.
void write_file(const std::filesystem::path& path, std::string_view contents);

std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

}  // namespace io
}  // namespace sidetect
