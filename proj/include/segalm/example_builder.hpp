// Packing indexed token streams into fixed-length examples, plus the
// fine-tuning layouts: pair/single classification and span extraction.
#pragma once

#include <algorithm>
#include <vector>

#include "segalm/common.hpp"
#include "segalm/example.hpp"
#include "segalm/segmenter.hpp"
#include "segalm/vocab.hpp"

namespace segalm {

// Greedy per-document packing: up to max_len-2 content tokens per example,
// [CLS] first with triple (0,0,0), [SEP] last inheriting the final content
// token's (p,s) with the next t. Examples never cross document boundaries.
inline std::vector<Example> pack_pretraining(const std::vector<IndexedToken>& tokens,
                                             int max_len, const Vocab& vocab,
                                             const SegmentCaps& caps = {}) {
    std::vector<Example> out;
    if (tokens.empty()) return out;
    if (max_len < 4) throw Error("max_len must be at least 4");
    const int capacity = max_len - 2;
    std::size_t pos = 0;
    while (pos < tokens.size()) {
        std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(capacity),
                                                 tokens.size() - pos);
        Example ex = Example::blank(max_len, vocab.pad_id());
        ex.kind = ExampleKind::Pretrain;
        ex.ids[0] = vocab.cls_id();
        ex.attn_mask[0] = 1;
        for (std::size_t k = 0; k < take; ++k) {
            const IndexedToken& tok = tokens[pos + k];
            std::size_t at = k + 1;
            ex.ids[at] = tok.id;
            ex.p[at] = static_cast<std::int16_t>(tok.p);
            ex.s[at] = static_cast<std::int16_t>(tok.s);
            ex.t[at] = static_cast<std::int16_t>(tok.t);
            ex.attn_mask[at] = 1;
        }
        const IndexedToken& last = tokens[pos + take - 1];
        std::size_t sep_at = take + 1;
        ex.ids[sep_at] = vocab.sep_id();
        ex.p[sep_at] = static_cast<std::int16_t>(last.p);
        ex.s[sep_at] = static_cast<std::int16_t>(last.s);
        ex.t[sep_at] = static_cast<std::int16_t>(
            std::min(last.t + 1, caps.max_tokens_per_sentence - 1));
        ex.attn_mask[sep_at] = 1;
        out.push_back(std::move(ex));
        pos += take;
    }
    return out;
}

namespace detail {
// Iterative longest-first tail truncation; on ties the second sequence
// loses a token.
inline void truncate_pair(std::vector<SubToken>& a, std::vector<SubToken>& b,
                          std::size_t max_content) {
    while (a.size() + b.size() > max_content) {
        if (a.size() > b.size())
            a.pop_back();
        else
            b.pop_back();
    }
}

inline void place(Example& ex, std::size_t at, int id, int p, int s, int t) {
    ex.ids[at] = id;
    ex.p[at] = static_cast<std::int16_t>(p);
    ex.s[at] = static_cast<std::int16_t>(s);
    ex.t[at] = static_cast<std::int16_t>(t);
    ex.attn_mask[at] = 1;
}
}  // namespace detail

// [CLS] A [SEP]; the sentence is paragraph 0, sentence 0.
inline Example build_single(std::vector<SubToken> seq, const Vocab& vocab, int max_len = 512,
                            const SegmentCaps& caps = {}) {
    if (seq.empty()) throw EmptySequence("single-classification text");
    if (max_len < 4) throw Error("max_len must be at least 4");
    if (seq.size() > static_cast<std::size_t>(max_len - 2)) seq.resize(static_cast<std::size_t>(max_len - 2));
    Example ex = Example::blank(max_len, vocab.pad_id());
    ex.kind = ExampleKind::SingleClassify;
    detail::place(ex, 0, vocab.cls_id(), 0, 0, 0);
    const int tcap = caps.max_tokens_per_sentence - 1;
    for (std::size_t k = 0; k < seq.size(); ++k)
        detail::place(ex, k + 1, seq[k].id, 0, 0, std::min<int>(static_cast<int>(k), tcap));
    detail::place(ex, seq.size() + 1, vocab.sep_id(), 0, 0,
                  std::min<int>(static_cast<int>(seq.size()), tcap));
    return ex;
}

// [CLS] A [SEP] B [SEP]; A is (paragraph 0, sentence 0), B is (paragraph 1,
// sentence 0), token indices counting from 0 inside each segment.
inline Example build_pair(std::vector<SubToken> seq_a, std::vector<SubToken> seq_b,
                          const Vocab& vocab, int max_len = 512, const SegmentCaps& caps = {}) {
    if (seq_a.empty()) throw EmptySequence("pair segment A");
    if (seq_b.empty()) throw EmptySequence("pair segment B");
    if (max_len < 6) throw Error("max_len must be at least 6");
    detail::truncate_pair(seq_a, seq_b, static_cast<std::size_t>(max_len - 3));
    Example ex = Example::blank(max_len, vocab.pad_id());
    ex.kind = ExampleKind::PairClassify;
    const int tcap = caps.max_tokens_per_sentence - 1;
    std::size_t at = 0;
    detail::place(ex, at++, vocab.cls_id(), 0, 0, 0);
    for (std::size_t k = 0; k < seq_a.size(); ++k)
        detail::place(ex, at++, seq_a[k].id, 0, 0, std::min<int>(static_cast<int>(k), tcap));
    detail::place(ex, at++, vocab.sep_id(), 0, 0, std::min<int>(static_cast<int>(seq_a.size()), tcap));
    for (std::size_t k = 0; k < seq_b.size(); ++k)
        detail::place(ex, at++, seq_b[k].id, 1, 0, std::min<int>(static_cast<int>(k), tcap));
    detail::place(ex, at++, vocab.sep_id(), 1, 0, std::min<int>(static_cast<int>(seq_b.size()), tcap));
    return ex;
}

// Context for span extraction: paragraphs of sentences of subtokens.
using SpanContext = std::vector<std::vector<std::vector<SubToken>>>;

// [CLS] question [SEP] context [SEP]. The question is (0,0,t); context
// paragraph i carries paragraph index i+1, sentences indexed from 0 inside
// each paragraph, tokens from 0 inside each sentence. answer_tok_begin/end
// (inclusive) index the flattened context token stream; pass -1 for
// unlabeled inputs.
inline Example build_span(const std::vector<SubToken>& question, const SpanContext& context,
                          const Vocab& vocab, int max_len = 512, const SegmentCaps& caps = {},
                          int answer_tok_begin = -1, int answer_tok_end = -1,
                          int max_question_tokens = 64) {
    if (question.empty()) throw EmptyQuestion();
    std::size_t ncontext = 0;
    for (const auto& para : context)
        for (const auto& sent : para) ncontext += sent.size();
    if (context.empty() || ncontext == 0) throw EmptySequence("span context");
    if (max_len < 8) throw Error("max_len must be at least 8");

    const std::size_t qlen =
        std::min({question.size(), static_cast<std::size_t>(max_question_tokens),
                  static_cast<std::size_t>(max_len - 4)});
    // [CLS] + question + [SEP] + context window + [SEP]
    const std::size_t context_window = static_cast<std::size_t>(max_len) - qlen - 3;

    Example ex = Example::blank(max_len, vocab.pad_id());
    ex.kind = ExampleKind::Span;
    const int pcap = caps.max_paragraphs - 1;
    const int scap = caps.max_sentences - 1;
    const int tcap = caps.max_tokens_per_sentence - 1;

    std::size_t at = 0;
    detail::place(ex, at++, vocab.cls_id(), 0, 0, 0);
    for (std::size_t k = 0; k < qlen; ++k)
        detail::place(ex, at++, question[k].id, 0, 0, std::min<int>(static_cast<int>(k), tcap));
    detail::place(ex, at++, vocab.sep_id(), 0, 0, std::min<int>(static_cast<int>(qlen), tcap));

    std::size_t flat = 0;       // index into the flattened context stream
    std::size_t placed = 0;     // context tokens actually packed
    int last_p = 1, last_s = 0, last_t = -1;
    for (std::size_t i = 0; i < context.size(); ++i) {
        for (std::size_t j = 0; j < context[i].size(); ++j) {
            const auto& sent = context[i][j];
            for (std::size_t k = 0; k < sent.size(); ++k, ++flat) {
                if (placed >= context_window) continue;
                int p = std::min<int>(static_cast<int>(i) + 1, pcap);
                int s = std::min<int>(static_cast<int>(j), scap);
                int t = std::min<int>(static_cast<int>(k), tcap);
                if (static_cast<int>(flat) == answer_tok_begin)
                    ex.span_start = static_cast<std::int32_t>(at);
                if (static_cast<int>(flat) == answer_tok_end)
                    ex.span_end = static_cast<std::int32_t>(at);
                detail::place(ex, at++, sent[k].id, p, s, t);
                last_p = p;
                last_s = s;
                last_t = t;
                ++placed;
            }
        }
    }
    detail::place(ex, at++, vocab.sep_id(), last_p, last_s, std::min(last_t + 1, tcap));

    if (answer_tok_begin >= 0 || answer_tok_end >= 0) {
        if (answer_tok_begin < 0 || answer_tok_end < answer_tok_begin)
            throw Error("invalid answer token range");
        if (ex.span_start < 0 || ex.span_end < 0) throw AnswerOutOfWindow();
    }
    return ex;
}

}  // namespace segalm
