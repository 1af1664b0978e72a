#include "sidetect/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cctype>

#include "sidetect/error.hpp"

namespace sidetect::text {

namespace {

bool is_space(char32_t cp) {
    return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\f' ||
           cp == U'\v' || u_isUWhiteSpace(static_cast<UChar32>(cp));
}

template <typename Fn>
void for_each_code_point(std::string_view s, Fn&& fn) {
    const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
    const int32_t length = static_cast<int32_t>(s.size());
    int32_t i = 0;
    while (i < length) {
        const int32_t start = i;
        UChar32 cp = 0;
        U8_NEXT(bytes, i, length, cp);
        if (cp < 0) throw DataError("invalid UTF-8 in input text");
        fn(static_cast<char32_t>(cp), s.substr(static_cast<size_t>(start),
                                                static_cast<size_t>(i - start)));
    }
}

}  // namespace

std::string trim(std::string_view s) {
    // Decode so that non-ASCII whitespace (e.g. U+3000) is trimmed too.
    size_t begin = s.size();
    size_t end = 0;
    size_t offset = 0;
    for_each_code_point(s, [&](char32_t cp, std::string_view bytes) {
        if (!is_space(cp)) {
            begin = std::min(begin, offset);
            end = offset + bytes.size();
        }
        offset += bytes.size();
    });
    if (begin >= end) return {};
    return std::string(s.substr(begin, end - begin));
}

std::string normalize(std::string_view s) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
    // Validate first: fromUTF8 silently substitutes U+FFFD.
    for_each_code_point(s, [](char32_t, std::string_view) {});
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(
        icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
    icu::UnicodeString out = nfc->normalize(u, status);
    if (U_FAILURE(status)) throw DataError("NFC normalization failed");
    std::string utf8;
    out.toUTF8String(utf8);
    return trim(utf8);
}

std::vector<std::string> code_points(std::string_view s) {
    std::vector<std::string> out;
    for_each_code_point(s, [&](char32_t, std::string_view bytes) { out.emplace_back(bytes); });
    return out;
}

bool is_cjk(char32_t cp) {
    return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
           (cp >= 0x20000 && cp <= 0x2A6DF) || (cp >= 0xF900 && cp <= 0xFAFF) ||
           (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFF00 && cp <= 0xFFEF);
}

std::vector<std::string> whitespace_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string current;
    for_each_code_point(s, [&](char32_t cp, std::string_view bytes) {
        if (is_space(cp)) {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
        } else {
            current.append(bytes);
        }
    });
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

std::vector<std::string> tokenize(std::string_view s, Language language) {
    if (language == Language::en) return whitespace_tokens(s);
    std::vector<std::string> out;
    for_each_code_point(s, [&](char32_t cp, std::string_view bytes) {
        if (!is_space(cp)) out.emplace_back(bytes);
    });
    return out;
}

std::vector<std::string> model_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
    };
    for_each_code_point(s, [&](char32_t cp, std::string_view bytes) {
        if (is_space(cp)) {
            flush();
        } else if (is_cjk(cp)) {
            flush();
            out.emplace_back(bytes);
        } else if (cp < 0x80 && u_ispunct(static_cast<UChar32>(cp))) {
            flush();
            out.emplace_back(bytes);
        } else if (cp < 0x80) {
            current.push_back(static_cast<char>(std::tolower(static_cast<int>(cp))));
        } else {
            current.append(bytes);
        }
    });
    flush();
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out.append(sep);
        out.append(parts[i]);
    }
    return out;
}

}  // namespace sidetect::text
