// Paragraph/sentence segmentation and (paragraph, sentence, token) index
// assignment under the embedding-table caps.
#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "segalm/common.hpp"
#include "segalm/vocab.hpp"
#include "segalm/wordpiece.hpp"

namespace segalm {

// Embedding-table sizes; valid indices are [0, cap-1].
struct SegmentCaps {
    int max_paragraphs = 50;
    int max_sentences = 100;
    int max_tokens_per_sentence = 256;

    bool valid() const {
        return max_paragraphs > 0 && max_sentences > 0 && max_tokens_per_sentence > 0;
    }
};

struct IndexedToken {
    int id = -1;
    int p = 0;
    int s = 0;
    int t = 0;
};

// paragraphs -> sentences -> subtokens, in document order.
struct Document {
    std::vector<std::vector<std::vector<SubToken>>> paragraphs;

    std::size_t token_count() const {
        std::size_t n = 0;
        for (const auto& para : paragraphs)
            for (const auto& sent : para) n += sent.size();
        return n;
    }
};

namespace detail {
inline bool line_is_blank(std::string_view line) {
    for (char c : line)
        if (c != ' ' && c != '\t' && c != '\r') return false;
    return true;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\n' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\n' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}
}  // namespace detail

// Paragraphs are maximal runs of non-blank lines separated by one or more
// blank lines.
inline std::vector<std::string> split_paragraphs(std::string_view raw) {
    std::vector<std::string> out;
    std::string cur;
    std::size_t pos = 0;
    auto flush = [&] {
        std::string p = detail::trim(cur);
        if (!p.empty()) out.push_back(std::move(p));
        cur.clear();
    };
    while (pos <= raw.size()) {
        std::size_t nl = raw.find('\n', pos);
        std::string_view line =
            raw.substr(pos, (nl == std::string_view::npos ? raw.size() : nl) - pos);
        if (detail::line_is_blank(line)) {
            flush();
        } else {
            if (!cur.empty()) cur.push_back('\n');
            cur.append(line);
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    flush();
    return out;
}

using AbbrevList = std::unordered_set<std::string>;

inline AbbrevList load_abbreviations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open abbreviation list: " + path);
    AbbrevList set;
    std::string line;
    while (std::getline(in, line)) {
        std::string w = detail::trim(line);
        if (w.empty() || w[0] == '#') continue;
        std::transform(w.begin(), w.end(), w.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        set.insert(std::move(w));
    }
    return set;
}

namespace detail {
inline bool is_upper_or_digit_start(std::string_view rest) {
    std::size_t i = 0;
    char32_t c = segalm::detail::decode_utf8(rest, i);
    if (c >= 'A' && c <= 'Z') return true;
    if (c >= '0' && c <= '9') return true;
    if (c >= 0x00C0 && c <= 0x00DE && c != 0x00D7) return true;
    return false;
}

// The run of ASCII letters immediately before position pos, lowercased.
inline std::string word_before(std::string_view text, std::size_t pos) {
    std::size_t b = pos;
    while (b > 0) {
        char c = text[b - 1];
        if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'))
            --b;
        else
            break;
    }
    std::string w(text.substr(b, pos - b));
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return w;
}
}  // namespace detail

// Rule-based sentence split: a run of [.!?] followed by whitespace and an
// uppercase letter or digit ends a sentence, unless the run is periods and
// the preceding word is on the abbreviation stop-list. An unsplittable
// paragraph comes back as one sentence.
inline std::vector<std::string> split_sentences(std::string_view paragraph,
                                                const AbbrevList& abbrevs) {
    std::vector<std::string> out;
    std::size_t start = 0;
    std::size_t i = 0;
    const std::size_t n = paragraph.size();
    while (i < n) {
        char c = paragraph[i];
        if (c != '.' && c != '!' && c != '?') {
            ++i;
            continue;
        }
        std::size_t run_begin = i;
        bool all_periods = true;
        while (i < n && (paragraph[i] == '.' || paragraph[i] == '!' || paragraph[i] == '?')) {
            if (paragraph[i] != '.') all_periods = false;
            ++i;
        }
        std::size_t after_run = i;
        std::size_t ws = after_run;
        while (ws < n && (paragraph[ws] == ' ' || paragraph[ws] == '\t' || paragraph[ws] == '\n' ||
                          paragraph[ws] == '\r'))
            ++ws;
        bool has_ws = ws > after_run;
        if (!has_ws || ws >= n) continue;
        if (!detail::is_upper_or_digit_start(paragraph.substr(ws))) continue;
        if (all_periods && abbrevs.count(detail::word_before(paragraph, run_begin)) > 0) continue;
        std::string sent = detail::trim(paragraph.substr(start, after_run - start));
        if (!sent.empty()) out.push_back(std::move(sent));
        start = ws;
    }
    std::string tail = detail::trim(paragraph.substr(start));
    if (!tail.empty()) out.push_back(std::move(tail));
    if (out.empty()) {
        std::string whole = detail::trim(paragraph);
        if (!whole.empty()) out.push_back(std::move(whole));
    }
    return out;
}

// Tokens clamped per axis during index assignment.
struct ClipStats {
    std::size_t clipped_paragraph = 0;
    std::size_t clipped_sentence = 0;
    std::size_t clipped_token = 0;
};

// Token k of sentence j of paragraph i gets (min(i, P-1), min(j, S-1),
// min(k, T-1)); indices restart from 0 at each enclosing boundary.
inline std::vector<IndexedToken> assign_indices(const Document& doc, const SegmentCaps& caps,
                                                ClipStats* stats = nullptr) {
    if (!caps.valid()) throw Error("invalid segment caps");
    std::vector<IndexedToken> out;
    out.reserve(doc.token_count());
    for (std::size_t i = 0; i < doc.paragraphs.size(); ++i) {
        for (std::size_t j = 0; j < doc.paragraphs[i].size(); ++j) {
            const auto& sent = doc.paragraphs[i][j];
            for (std::size_t k = 0; k < sent.size(); ++k) {
                IndexedToken tok;
                tok.id = sent[k].id;
                tok.p = std::min<int>(static_cast<int>(i), caps.max_paragraphs - 1);
                tok.s = std::min<int>(static_cast<int>(j), caps.max_sentences - 1);
                tok.t = std::min<int>(static_cast<int>(k), caps.max_tokens_per_sentence - 1);
                if (stats) {
                    if (static_cast<int>(i) >= caps.max_paragraphs) ++stats->clipped_paragraph;
                    if (static_cast<int>(j) >= caps.max_sentences) ++stats->clipped_sentence;
                    if (static_cast<int>(k) >= caps.max_tokens_per_sentence) ++stats->clipped_token;
                }
                out.push_back(tok);
            }
        }
    }
    return out;
}

// Full segmentation pipeline for one raw document. Sentences whose
// tokenization comes back empty are dropped, as are paragraphs left with no
// sentences.
inline Document build_document(std::string_view raw, const Vocab& vocab, const AbbrevList& abbrevs,
                               const TokenizerOptions& opts = {}) {
    Document doc;
    for (const auto& para : split_paragraphs(raw)) {
        std::vector<std::vector<SubToken>> sentences;
        for (const auto& sent : split_sentences(para, abbrevs)) {
            auto toks = tokenize(sent, vocab, opts);
            if (!toks.empty()) sentences.push_back(std::move(toks));
        }
        if (!sentences.empty()) doc.paragraphs.push_back(std::move(sentences));
    }
    return doc;
}

}  // namespace segalm
