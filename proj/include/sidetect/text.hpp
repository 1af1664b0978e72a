#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sidetect/types.hpp"

namespace sidetect::text {

std::string trim(std::string_view s);

// Unicode NFC followed by whitespace trim. Invalid UTF-8 raises DataError.
std::string normalize(std::string_view s);

// Splits UTF-8 into code points, each returned as its own string.
std::vector<std::string> code_points(std::string_view s);

bool is_cjk(char32_t cp);

std::vector<std::string> whitespace_tokens(std::string_view s);

// Overlap-analysis tokenization: whitespace for English, one token per
// non-space character for Chinese.
std::vector<std::string> tokenize(std::string_view s, Language language);

// Tokenization shared by the scoring LM and the neural detectors: ASCII is
// lowercased, punctuation is split off, CJK characters become single tokens.
std::vector<std::string> model_tokens(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace sidetect::text
