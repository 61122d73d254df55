// Uncased WordPiece tokenization: cleanup, lowercase + accent strip,
// punctuation/CJK isolation, then greedy longest-match against the vocab.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "segalm/common.hpp"
#include "segalm/vocab.hpp"

namespace segalm {

struct TokenizerOptions {
    bool lowercase = true;       // lowercase + accent stripping (uncased convention)
    int max_word_chars = 100;    // longer words map to [UNK] wholesale
};

// A whitespace/punctuation-delimited word after normalization, with the byte
// span it covers in the original string (used for answer alignment).
struct Word {
    std::string text;
    std::size_t byte_begin = 0;
    std::size_t byte_end = 0;
};

namespace detail {

inline bool is_ascii_punct(char32_t c) {
    return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
           (c >= 123 && c <= 126);
}

inline bool is_punct(char32_t c) {
    if (is_ascii_punct(c)) return true;
    if (c == 0x00A1 || c == 0x00BF || c == 0x00AB || c == 0x00BB) return true;
    if (c >= 0x2010 && c <= 0x2027) return true;
    if (c >= 0x2030 && c <= 0x205E) return true;
    if (c >= 0x3001 && c <= 0x303F) return true;
    if (c >= 0xFF01 && c <= 0xFF0F) return true;
    if (c >= 0xFF1A && c <= 0xFF20) return true;
    if (c >= 0xFF3B && c <= 0xFF40) return true;
    if (c >= 0xFF5B && c <= 0xFF65) return true;
    return false;
}

inline bool is_whitespace(char32_t c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == 0x00A0 ||
           (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x3000;
}

inline bool is_control(char32_t c) {
    if (c == '\t' || c == '\n' || c == '\r') return false;
    if (c < 0x20 || (c >= 0x7F && c <= 0x9F)) return true;
    if (c >= 0x200B && c <= 0x200F) return true;
    return c == 0xFEFF || c == 0xFFFD || c == 0;
}

inline bool is_cjk(char32_t c) {
    return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) ||
           (c >= 0x20000 && c <= 0x2A6DF) || (c >= 0x2A700 && c <= 0x2CEAF) ||
           (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x2F800 && c <= 0x2FA1F);
}

inline bool is_combining_mark(char32_t c) { return c >= 0x0300 && c <= 0x036F; }

// Latin-1 Supplement and Latin Extended-A folded to ASCII base letters.
// '.' marks codepoints kept as-is (ligatures, eth, thorn, sharp s, ...).
inline char32_t strip_accent(char32_t c) {
    static constexpr std::string_view latin1 =
        "AAAAAA.CEEEEIIII.NOOOOO..UUUUY.."
        "aaaaaa.ceeeeiiii.nooooo..uuuuy.y";
    static constexpr std::string_view latin_ext_a =
        "AaAaAaCcCcCcCcDdDdEeEeEeEeEeGgGgGgGgHhHhIiIiIiIiIi..JjKk.LlLlLlLlLl"
        "NnNn"
        "Nn...OoOoOo..RrRrRrSsSsSsSsTtTtTtUuUuUuUuUuUuWwYyYZzZzZzs";
    if (c >= 0x00C0 && c <= 0x00FF) {
        char m = latin1[c - 0x00C0];
        return m == '.' ? c : static_cast<char32_t>(m);
    }
    if (c >= 0x0100 && c <= 0x017F) {
        char m = latin_ext_a[c - 0x0100];
        return m == '.' ? c : static_cast<char32_t>(m);
    }
    return c;
}

inline char32_t to_lower(char32_t c) {
    if (c >= 'A' && c <= 'Z') return c + 32;
    return c;
}

// Decodes one UTF-8 codepoint at byte i; advances i. Malformed bytes decode
// to U+FFFD and advance by one.
inline char32_t decode_utf8(std::string_view s, std::size_t& i) {
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    auto cont = [&](std::size_t k) {
        return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
    };
    if ((b0 & 0xE0) == 0xC0 && cont(1)) {
        char32_t c = ((b0 & 0x1Fu) << 6) | (static_cast<unsigned char>(s[i + 1]) & 0x3Fu);
        i += 2;
        return c;
    }
    if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
        char32_t c = ((b0 & 0x0Fu) << 12) | ((static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 6) |
                     (static_cast<unsigned char>(s[i + 2]) & 0x3Fu);
        i += 3;
        return c;
    }
    if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
        char32_t c = ((b0 & 0x07u) << 18) | ((static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 12) |
                     ((static_cast<unsigned char>(s[i + 2]) & 0x3Fu) << 6) |
                     (static_cast<unsigned char>(s[i + 3]) & 0x3Fu);
        i += 4;
        return c;
    }
    ++i;
    return 0xFFFD;
}

inline void encode_utf8(char32_t c, std::string& out) {
    if (c < 0x80) {
        out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (c >> 6)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (c >> 12)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (c >> 18)));
        out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
}

inline std::vector<std::size_t> codepoint_starts(std::string_view s) {
    std::vector<std::size_t> starts;
    std::size_t i = 0;
    while (i < s.size()) {
        starts.push_back(i);
        decode_utf8(s, i);
    }
    starts.push_back(s.size());
    return starts;
}

}  // namespace detail

// Normalization + splitting. Each output word is a maximal run of normalized
// letter characters, or a single punctuation/CJK character.
inline std::vector<Word> pre_split(std::string_view text, const TokenizerOptions& opts = {}) {
    using namespace detail;
    std::vector<Word> words;
    Word cur;
    bool in_word = false;
    auto flush = [&] {
        if (in_word && !cur.text.empty()) words.push_back(cur);
        cur = Word{};
        in_word = false;
    };
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t begin = i;
        char32_t c = decode_utf8(text, i);
        if (is_control(c)) continue;
        if (is_whitespace(c)) {
            flush();
            continue;
        }
        if (opts.lowercase) {
            if (is_combining_mark(c)) {
                // accent stripping drops combining marks, but the word keeps
                // covering their bytes
                if (in_word) cur.byte_end = i;
                continue;
            }
            c = to_lower(strip_accent(c));
        }
        if (is_punct(c) || is_cjk(c)) {
            flush();
            Word w;
            w.byte_begin = begin;
            w.byte_end = i;
            encode_utf8(c, w.text);
            words.push_back(w);
            continue;
        }
        if (!in_word) {
            in_word = true;
            cur.byte_begin = begin;
        }
        encode_utf8(c, cur.text);
        cur.byte_end = i;
    }
    flush();
    return words;
}

// Greedy longest-match-first WordPiece on one normalized word. A word with
// any unmatched remainder maps entirely to [UNK].
inline std::vector<SubToken> wordpiece_word(const std::string& word, const Vocab& vocab,
                                            int max_word_chars = 100) {
    using namespace detail;
    std::vector<std::size_t> starts = codepoint_starts(word);
    std::size_t nchars = starts.size() - 1;
    auto unk = [&] {
        return std::vector<SubToken>{
            SubToken{vocab.unk_id(), std::string(kUnkToken), false}};
    };
    if (nchars == 0) return {};
    if (static_cast<int>(nchars) > max_word_chars) return unk();

    std::vector<SubToken> pieces;
    std::size_t start = 0;
    while (start < nchars) {
        std::size_t end = nchars;
        int found = -1;
        std::string found_surface;
        while (end > start) {
            std::string candidate = (start > 0) ? "##" : "";
            candidate.append(word, starts[start], starts[end] - starts[start]);
            int id = vocab.find(candidate);
            if (id >= 0) {
                found = id;
                found_surface = std::move(candidate);
                break;
            }
            --end;
        }
        if (found < 0) return unk();
        pieces.push_back(SubToken{found, std::move(found_surface), start > 0});
        start = end;
    }
    return pieces;
}

struct TokenizedText {
    std::vector<SubToken> tokens;
    std::vector<int> word_of;  // tokens[i] came from words[word_of[i]]
    std::vector<Word> words;
};

inline TokenizedText tokenize_full(std::string_view text, const Vocab& vocab,
                                   const TokenizerOptions& opts = {}) {
    TokenizedText out;
    out.words = pre_split(text, opts);
    for (std::size_t w = 0; w < out.words.size(); ++w) {
        auto pieces = wordpiece_word(out.words[w].text, vocab, opts.max_word_chars);
        for (auto& p : pieces) {
            out.tokens.push_back(std::move(p));
            out.word_of.push_back(static_cast<int>(w));
        }
    }
    return out;
}

inline std::vector<SubToken> tokenize(std::string_view text, const Vocab& vocab,
                                      const TokenizerOptions& opts = {}) {
    return tokenize_full(text, vocab, opts).tokens;
}

}  // namespace segalm
