#include "meshcap/text.hpp"

#include <stdexcept>

namespace meshcap {

bool is_unicode_space(char32_t cp) {
    switch (cp) {
        case 0x09:
        case 0x0A:
        case 0x0B:
        case 0x0C:
        case 0x0D:
        case 0x20:
        case 0x85:
        case 0xA0:
        case 0x1680:
        case 0x2028:
        case 0x2029:
        case 0x202F:
        case 0x205F:
        case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

std::u32string utf8_decode(const std::string& s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    const auto bad = [] { throw std::invalid_argument("malformed UTF-8 input"); };
    while (i < s.size()) {
        const unsigned char b0 = static_cast<unsigned char>(s[i]);
        std::size_t extra;
        char32_t cp;
        if (b0 < 0x80) {
            extra = 0;
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            extra = 1;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            extra = 2;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            extra = 3;
            cp = b0 & 0x07;
        } else {
            bad();
            return out;
        }
        if (extra > 0 && i + extra >= s.size()) bad();
        for (std::size_t k = 1; k <= extra; ++k) {
            const unsigned char b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) bad();
            cp = (cp << 6) | (b & 0x3F);
        }
        // Reject overlong encodings and surrogate/overflow values.
        if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) ||
            (extra == 3 && cp < 0x10000) || cp > 0x10FFFF ||
            (cp >= 0xD800 && cp <= 0xDFFF)) {
            bad();
        }
        out.push_back(cp);
        i += extra + 1;
    }
    return out;
}

std::string utf8_encode_cp(char32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return out;
}

std::string utf8_encode(const std::u32string& s) {
    std::string out;
    out.reserve(s.size());
    for (char32_t cp : s) out += utf8_encode_cp(cp);
    return out;
}

std::string normalize_text(const std::string& s) {
    const std::u32string in = utf8_decode(s);

    std::u32string no_punct;
    no_punct.reserve(in.size());
    for (char32_t cp : in)
        if (!is_unicode_punct(cp)) no_punct.push_back(cp);

    std::u32string capped;
    capped.reserve(no_punct.size());
    std::size_t run = 0;
    for (std::size_t i = 0; i < no_punct.size(); ++i) {
        run = (i > 0 && no_punct[i] == no_punct[i - 1]) ? run + 1 : 1;
        if (run <= 2) capped.push_back(no_punct[i]);
    }

    std::u32string out;
    out.reserve(capped.size());
    bool in_space = false;
    for (char32_t cp : capped) {
        if (is_unicode_space(cp)) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(U' ');
        in_space = false;
        out.push_back(cp);
    }
    return utf8_encode(out);
}

std::vector<std::string> split_tokens(const std::string& s) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && s[i] == ' ') ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ') ++j;
        if (j > i) tokens.push_back(s.substr(i, j - i));
        i = j;
    }
    return tokens;
}

}  // namespace meshcap
