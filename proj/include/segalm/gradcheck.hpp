// Central-difference verification of every analytic gradient, per named
// tensor, in double precision.
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "segalm/adam.hpp"
#include "segalm/example_builder.hpp"
#include "segalm/masking.hpp"
#include "segalm/model.hpp"

namespace segalm {

struct GradCheckGroup {
    std::string name;
    bool skipped = false;
    std::string note;
    int checked_coords = 0;
    double max_rel_err = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    double tolerance = 1e-4;
    std::vector<GradCheckGroup> groups;
    bool all_pass = true;
};

namespace detail {

// Fixed fixture batch covering all three objectives.
struct GradCheckFixture {
    Example mlm_example;
    std::vector<std::int32_t> mlm_labels;
    Example cls_example;
    Example span_example;
};

inline GradCheckFixture gradcheck_fixture(const Vocab& vocab, std::uint64_t seed) {
    GradCheckFixture fx;
    const int max_len = 24;
    Rng rng = derive_rng(seed, stream::kMasking);

    std::vector<IndexedToken> toks;
    for (int k = 0; k < 14; ++k)
        toks.push_back(IndexedToken{5 + (k * 7) % 90, k / 8, (k / 3) % 4, k % 3});
    auto packed = pack_pretraining(toks, max_len, vocab);
    MaskingPolicy policy;
    auto masked = apply_masking(packed.at(0), policy, vocab, rng);
    fx.mlm_example = masked.example;
    fx.mlm_labels = masked.labels;

    std::vector<SubToken> a, b;
    for (int k = 0; k < 5; ++k) a.push_back(SubToken{10 + k, "a", false});
    for (int k = 0; k < 4; ++k) b.push_back(SubToken{30 + k, "b", false});
    fx.cls_example = build_pair(a, b, vocab, max_len);
    fx.cls_example.class_label = 1;

    std::vector<SubToken> q = {SubToken{40, "q", false}, SubToken{41, "q", false}};
    SpanContext ctx = {{{SubToken{50, "c", false}, SubToken{51, "c", false}},
                        {SubToken{52, "c", false}}},
                       {{SubToken{53, "c", false}, SubToken{54, "c", false}}}};
    fx.span_example = build_span(q, ctx, vocab, max_len, SegmentCaps{}, 1, 3);
    return fx;
}

// Deterministic scalar objective: MLM mean CE + pair-classification CE +
// span CE, all in inference mode (no dropout).
template <typename S>
S gradcheck_loss(ModelParams<S>& mp, const GradCheckFixture& fx, const Vocab& vocab,
                 ModelParams<S>* grads) {
    S total = S(0);

    {  // masked LM
        EmbedCache<S> ec;
        EncoderCache<S> enc;
        Mat<S> x = embed(fx.mlm_example, mp.embedding, mp.scheme, {}, grads ? &ec : nullptr);
        auto states = encoder_forward(x, fx.mlm_example.attn_mask, mp.layers, mp.config, {},
                                      grads ? &enc : nullptr);
        std::vector<int> positions;
        std::vector<int> targets;
        for (std::size_t i = 0; i < fx.mlm_labels.size(); ++i)
            if (fx.mlm_labels[i] >= 0) {
                positions.push_back(static_cast<int>(i));
                targets.push_back(fx.mlm_labels[i]);
            }
        MlmHeadCache<S> hc;
        Mat<S> logits = mlm_head_forward(states.back(), positions, mp, grads ? &hc : nullptr);
        auto ce = cross_entropy_columns(logits, targets, grads != nullptr);
        const S scale = S(1) / static_cast<S>(targets.size());
        total += ce.loss_sum * scale;
        if (grads) {
            Mat<S> dfinal = Mat<S>::Zero(states.back().rows(), states.back().cols());
            Mat<S> dlogits = ce.dlogits * scale;
            mlm_head_backward(dlogits, mp, hc, *grads, dfinal);
            Mat<S> dx = encoder_backward(dfinal, mp.layers, mp.config, enc, grads->layers);
            embed_backward(fx.mlm_example, dx, mp.embedding, mp.scheme, ec, grads->embedding);
        }
    }

    {  // pair classification
        EmbedCache<S> ec;
        EncoderCache<S> enc;
        Mat<S> x = embed(fx.cls_example, mp.embedding, mp.scheme, {}, grads ? &ec : nullptr);
        auto states = encoder_forward(x, fx.cls_example.attn_mask, mp.layers, mp.config, {},
                                      grads ? &enc : nullptr);
        PoolerCache<S> pc;
        Vec<S> logits = classifier_forward(states.back(), mp, grads ? &pc : nullptr);
        Mat<S> lm = logits;
        auto ce = cross_entropy_columns(lm, {fx.cls_example.class_label}, grads != nullptr);
        total += ce.loss_sum;
        if (grads) {
            Mat<S> dfinal = Mat<S>::Zero(states.back().rows(), states.back().cols());
            Vec<S> dlogits = ce.dlogits.col(0);
            classifier_backward(dlogits, mp, pc, *grads, dfinal);
            Mat<S> dx = encoder_backward(dfinal, mp.layers, mp.config, enc, grads->layers);
            embed_backward(fx.cls_example, dx, mp.embedding, mp.scheme, ec, grads->embedding);
        }
    }

    {  // span extraction
        EmbedCache<S> ec;
        EncoderCache<S> enc;
        Mat<S> x = embed(fx.span_example, mp.embedding, mp.scheme, {}, grads ? &ec : nullptr);
        auto states = encoder_forward(x, fx.span_example.attn_mask, mp.layers, mp.config, {},
                                      grads ? &enc : nullptr);
        auto candidates = span_candidates(fx.span_example, vocab);
        auto lg = span_head_forward(states.back(), candidates, mp);
        int start_idx = -1, end_idx = -1;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (candidates[i] == fx.span_example.span_start) start_idx = static_cast<int>(i);
            if (candidates[i] == fx.span_example.span_end) end_idx = static_cast<int>(i);
        }
        if (start_idx < 0 || end_idx < 0) throw Error("gradcheck fixture span outside candidates");
        Mat<S> sm = lg.start;
        Mat<S> em = lg.end;
        auto ce_s = cross_entropy_columns(sm, {start_idx}, grads != nullptr);
        auto ce_e = cross_entropy_columns(em, {end_idx}, grads != nullptr);
        total += S(0.5) * (ce_s.loss_sum + ce_e.loss_sum);
        if (grads) {
            Mat<S> dfinal = Mat<S>::Zero(states.back().rows(), states.back().cols());
            Vec<S> ds = ce_s.dlogits.col(0) * S(0.5);
            Vec<S> de = ce_e.dlogits.col(0) * S(0.5);
            span_head_backward(ds, de, states.back(), lg, mp, *grads, dfinal);
            Mat<S> dx = encoder_backward(dfinal, mp.layers, mp.config, enc, grads->layers);
            embed_backward(fx.span_example, dx, mp.embedding, mp.scheme, ec, grads->embedding);
        }
    }
    return total;
}

}  // namespace detail

// Runs the TOY-sized check: analytic gradients against central differences
// on sampled coordinates of every tensor. corrupt_tensor deliberately
// perturbs one analytic gradient (fault-injection path for tests).
inline GradCheckReport gradient_check(PositionScheme scheme, EncoderConfig cfg, const Vocab& vocab,
                                      double tolerance = 1e-4, std::uint64_t seed = 7,
                                      int coords_per_tensor = 24,
                                      const std::string& corrupt_tensor = {}) {
    cfg.dropout = 0.0;  // the objective must be deterministic in the params
    auto mp = alloc_model<double>(scheme, cfg, vocab.size());
    // Larger-than-training init keeps the attention softmax away from the
    // uniform fixed point, where Q/K gradients would vanish into the
    // finite-difference noise floor.
    const double init_std = 0.1;
    init_model(mp, seed, init_std);
    attach_classifier(mp, 3);
    attach_span_head(mp);
    init_tensors_matching(mp, seed, "cls.", init_std);
    init_tensors_matching(mp, seed, "span.", init_std);

    auto fx = detail::gradcheck_fixture(vocab, seed);
    auto grads = zeros_like(mp);
    detail::gradcheck_loss(mp, fx, vocab, &grads);

    GradCheckReport report;
    report.tolerance = tolerance;

    auto p_tensors = mp.manifest();
    auto g_tensors = grads.manifest();
    for (std::size_t ti = 0; ti < p_tensors.size(); ++ti) {
        GradCheckGroup group;
        group.name = p_tensors[ti].name;
        const Eigen::Index size = p_tensors[ti].size();
        if (size == 0) {
            group.skipped = true;
            group.note = "no parameters for this scheme";
            report.groups.push_back(group);
            continue;
        }
        const bool corrupt = group.name == corrupt_tensor;
        Rng coord_rng = derive_rng(seed, /*stream=*/91, ti);
        std::vector<Eigen::Index> coords;
        if (size <= coords_per_tensor) {
            for (Eigen::Index i = 0; i < size; ++i) coords.push_back(i);
        } else {
            std::uniform_int_distribution<Eigen::Index> pick(0, size - 1);
            for (int i = 0; i < coords_per_tensor; ++i) coords.push_back(pick(coord_rng));
        }
        for (Eigen::Index c : coords) {
            double* slot = p_tensors[ti].data + c;
            const double saved = *slot;
            const double eps = 2e-5 * std::max(1.0, std::abs(saved));
            *slot = saved + eps;
            const double up = detail::gradcheck_loss<double>(mp, fx, vocab, nullptr);
            *slot = saved - eps;
            const double down = detail::gradcheck_loss<double>(mp, fx, vocab, nullptr);
            *slot = saved;
            const double numeric = (up - down) / (2.0 * eps);
            double analytic = g_tensors[ti].data[c];
            if (corrupt) analytic += 1.0;
            // The floor keeps central-difference cancellation noise from
            // dominating gradients that are algebraically (near) zero.
            const double rel =
                std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-5});
            group.max_rel_err = std::max(group.max_rel_err, rel);
            ++group.checked_coords;
        }
        group.pass = group.max_rel_err < tolerance;
        if (!group.pass) report.all_pass = false;
        report.groups.push_back(group);
    }
    return report;
}

}  // namespace segalm
