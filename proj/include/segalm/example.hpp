// Fixed-capacity packed training example: ids, index triples, attention
// mask, and task labels.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "segalm/common.hpp"
#include "segalm/segmenter.hpp"
#include "segalm/vocab.hpp"

namespace segalm {

enum class ExampleKind : std::uint8_t { Pretrain = 0, PairClassify = 1, SingleClassify = 2, Span = 3 };

inline const char* kind_name(ExampleKind k) {
    switch (k) {
        case ExampleKind::Pretrain: return "Pretrain";
        case ExampleKind::PairClassify: return "PairClassify";
        case ExampleKind::SingleClassify: return "SingleClassify";
        case ExampleKind::Span: return "Span";
    }
    return "?";
}

struct Example {
    ExampleKind kind = ExampleKind::Pretrain;
    std::vector<std::int32_t> ids;
    std::vector<std::int16_t> p, s, t;
    std::vector<std::uint8_t> attn_mask;  // 1 on real tokens, 0 on the padding suffix
    std::int32_t class_label = -1;        // classification tasks
    std::int32_t span_start = -1;         // span task: gold positions in the packed sequence
    std::int32_t span_end = -1;

    static Example blank(int max_len, int pad_id) {
        Example ex;
        ex.ids.assign(static_cast<std::size_t>(max_len), pad_id);
        ex.p.assign(static_cast<std::size_t>(max_len), 0);
        ex.s.assign(static_cast<std::size_t>(max_len), 0);
        ex.t.assign(static_cast<std::size_t>(max_len), 0);
        ex.attn_mask.assign(static_cast<std::size_t>(max_len), 0);
        return ex;
    }

    int max_len() const { return static_cast<int>(ids.size()); }

    // Number of real (unpadded) positions; padding is a suffix.
    int length() const {
        int n = 0;
        for (std::size_t i = 0; i < attn_mask.size(); ++i)
            if (attn_mask[i]) n = static_cast<int>(i) + 1;
        return n;
    }

    bool operator==(const Example& other) const = default;
};

// Structural invariants shared by every packed example. Returns an empty
// string when the example is well-formed.
inline std::string validate_example(const Example& ex, const Vocab& vocab, const SegmentCaps& caps) {
    const int n = ex.max_len();
    if (static_cast<int>(ex.p.size()) != n || static_cast<int>(ex.s.size()) != n ||
        static_cast<int>(ex.t.size()) != n || static_cast<int>(ex.attn_mask.size()) != n)
        return "field arrays disagree on max_len";
    if (n == 0) return "zero-length example";
    if (ex.ids[0] != vocab.cls_id()) return "position 0 is not [CLS]";
    int real = 0;
    bool seen_pad = false;
    for (int i = 0; i < n; ++i) {
        if (ex.attn_mask[i] == 1) {
            if (seen_pad) return "padding is not a suffix";
            ++real;
        } else {
            seen_pad = true;
            if (ex.ids[static_cast<std::size_t>(i)] != vocab.pad_id()) return "pad position without pad id";
        }
    }
    if (real == 0) return "no real tokens";
    if (ex.ids[static_cast<std::size_t>(real - 1)] != vocab.sep_id()) return "last real token is not [SEP]";
    int seps = 0;
    for (int i = 0; i < real; ++i)
        if (ex.ids[static_cast<std::size_t>(i)] == vocab.sep_id()) ++seps;
    int want_seps =
        (ex.kind == ExampleKind::PairClassify || ex.kind == ExampleKind::Span) ? 2 : 1;
    if (seps != want_seps) return "wrong [SEP] count for kind";
    for (int i = 0; i < real; ++i) {
        if (ex.p[static_cast<std::size_t>(i)] < 0 || ex.p[static_cast<std::size_t>(i)] >= caps.max_paragraphs)
            return "paragraph index out of bounds";
        if (ex.s[static_cast<std::size_t>(i)] < 0 || ex.s[static_cast<std::size_t>(i)] >= caps.max_sentences)
            return "sentence index out of bounds";
        if (ex.t[static_cast<std::size_t>(i)] < 0 || ex.t[static_cast<std::size_t>(i)] >= caps.max_tokens_per_sentence)
            return "token index out of bounds";
    }
    return {};
}

}  // namespace segalm
