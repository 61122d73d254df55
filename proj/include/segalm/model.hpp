// Full-model forward/backward glue: embeddings -> encoder -> objective
// heads (masked LM, [CLS] classification, span extraction).
#pragma once

#include <cstdint>
#include <vector>

#include "segalm/embeddings.hpp"
#include "segalm/encoder.hpp"
#include "segalm/losses.hpp"
#include "segalm/params.hpp"

namespace segalm {

template <typename S>
struct MlmHeadCache {
    std::vector<int> positions;  // labeled columns in the sequence
    Mat<S> h;                    // H x m gathered hidden states
    Mat<S> pre;                  // H x m transform pre-activation
    Mat<S> act;                  // H x m post-GELU
    LnCache<S> ln;
    Mat<S> z;                    // H x m normalized
};

// Logits over the vocabulary at the given positions; the decoder weight is
// the token embedding table (tied).
template <typename S>
Mat<S> mlm_head_forward(const Mat<S>& final_hidden, const std::vector<int>& positions,
                        const ModelParams<S>& mp, MlmHeadCache<S>* cache = nullptr) {
    const Eigen::Index m = static_cast<Eigen::Index>(positions.size());
    Mat<S> h(final_hidden.rows(), m);
    for (Eigen::Index i = 0; i < m; ++i) h.col(i) = final_hidden.col(positions[static_cast<std::size_t>(i)]);
    Mat<S> pre = mp.mlm.transform_w * h;
    pre.colwise() += mp.mlm.transform_b;
    Mat<S> act = gelu(pre);
    LnCache<S> scratch;
    Mat<S> z = layer_norm(act, mp.mlm.ln_gain, mp.mlm.ln_bias, cache ? &cache->ln : &scratch);
    Mat<S> logits = mp.embedding.token_table.transpose() * z;
    logits.colwise() += mp.mlm.out_bias;
    if (cache) {
        cache->positions = positions;
        cache->h = std::move(h);
        cache->pre = std::move(pre);
        cache->act = std::move(act);
        cache->z = std::move(z);
    }
    return logits;
}

// Backward from d(logits); adds the gathered-state gradient into dfinal.
template <typename S>
void mlm_head_backward(const Mat<S>& dlogits, const ModelParams<S>& mp, const MlmHeadCache<S>& c,
                       ModelParams<S>& grads, Mat<S>& dfinal) {
    grads.embedding.token_table += c.z * dlogits.transpose();
    grads.mlm.out_bias += dlogits.rowwise().sum();
    Mat<S> dz = mp.embedding.token_table * dlogits;
    Mat<S> dact = layer_norm_backward(dz, mp.mlm.ln_gain, c.ln, grads.mlm.ln_gain, grads.mlm.ln_bias);
    Mat<S> dpre = dact.cwiseProduct(gelu_grad(c.pre));
    grads.mlm.transform_w += dpre * c.h.transpose();
    grads.mlm.transform_b += dpre.rowwise().sum();
    Mat<S> dh = mp.mlm.transform_w.transpose() * dpre;
    for (Eigen::Index i = 0; i < dh.cols(); ++i)
        dfinal.col(c.positions[static_cast<std::size_t>(i)]) += dh.col(i);
}

template <typename S>
struct PoolerCache {
    Vec<S> h0;
    Vec<S> pooled;  // tanh output
};

// tanh pooler over the [CLS] column, then a linear classifier.
template <typename S>
Vec<S> classifier_forward(const Mat<S>& final_hidden, const ModelParams<S>& mp,
                          PoolerCache<S>* cache = nullptr) {
    if (!mp.classifier) throw Error("model has no classifier head");
    const ClassifierParams<S>& head = *mp.classifier;
    Vec<S> h0 = final_hidden.col(0);
    Vec<S> pooled = (head.pooler_w * h0 + head.pooler_b).array().tanh().matrix();
    Vec<S> logits = head.out_w * pooled + head.out_b;
    if (cache) {
        cache->h0 = std::move(h0);
        cache->pooled = std::move(pooled);
    }
    return logits;
}

template <typename S>
void classifier_backward(const Vec<S>& dlogits, const ModelParams<S>& mp, const PoolerCache<S>& c,
                         ModelParams<S>& grads, Mat<S>& dfinal) {
    const ClassifierParams<S>& head = *mp.classifier;
    ClassifierParams<S>& ghead = *grads.classifier;
    ghead.out_w += dlogits * c.pooled.transpose();
    ghead.out_b += dlogits;
    Vec<S> dpooled = head.out_w.transpose() * dlogits;
    Vec<S> du = dpooled.cwiseProduct(
        (Vec<S>::Ones(c.pooled.size()) - c.pooled.cwiseProduct(c.pooled)));
    ghead.pooler_w += du * c.h0.transpose();
    ghead.pooler_b += du;
    dfinal.col(0) += head.pooler_w.transpose() * du;
}

// Context candidate positions for span prediction: real tokens strictly
// after the first [SEP], excluding the final [SEP].
inline std::vector<int> span_candidates(const Example& ex, const Vocab& vocab) {
    std::vector<int> out;
    const int real = ex.length();
    int first_sep = -1;
    for (int i = 0; i < real; ++i) {
        if (ex.ids[static_cast<std::size_t>(i)] == vocab.sep_id()) {
            first_sep = i;
            break;
        }
    }
    if (first_sep < 0) return out;
    for (int i = first_sep + 1; i < real - 1; ++i) out.push_back(i);
    return out;
}

template <typename S>
struct SpanLogits {
    std::vector<int> positions;  // candidate columns
    Vec<S> start;                // logits per candidate
    Vec<S> end;
};

template <typename S>
SpanLogits<S> span_head_forward(const Mat<S>& final_hidden, const std::vector<int>& candidates,
                                const ModelParams<S>& mp) {
    if (!mp.span) throw Error("model has no span head");
    if (candidates.empty()) throw NoContextPositions();
    const SpanHeadParams<S>& head = *mp.span;
    SpanLogits<S> out;
    out.positions = candidates;
    const Eigen::Index m = static_cast<Eigen::Index>(candidates.size());
    out.start.resize(m);
    out.end.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto col = final_hidden.col(candidates[static_cast<std::size_t>(i)]);
        out.start(i) = head.start_w.dot(col) + head.start_b(0);
        out.end(i) = head.end_w.dot(col) + head.end_b(0);
    }
    return out;
}

template <typename S>
void span_head_backward(const Vec<S>& dstart, const Vec<S>& dend, const Mat<S>& final_hidden,
                        const SpanLogits<S>& lg, const ModelParams<S>& mp, ModelParams<S>& grads,
                        Mat<S>& dfinal) {
    const SpanHeadParams<S>& head = *mp.span;
    SpanHeadParams<S>& ghead = *grads.span;
    for (Eigen::Index i = 0; i < dstart.size(); ++i) {
        const int pos = lg.positions[static_cast<std::size_t>(i)];
        const auto col = final_hidden.col(pos);
        ghead.start_w += dstart(i) * col;
        ghead.end_w += dend(i) * col;
        ghead.start_b(0) += dstart(i);
        ghead.end_b(0) += dend(i);
        dfinal.col(pos) += dstart(i) * head.start_w + dend(i) * head.end_w;
    }
}

// Convenience wrapper: run embed + encoder in inference mode and return all
// hidden states (index 0 = embedding output).
template <typename S>
std::vector<Mat<S>> model_forward_states(const Example& ex, const ModelParams<S>& mp) {
    Mat<S> x = embed(ex, mp.embedding, mp.scheme);
    return encoder_forward(x, ex.attn_mask, mp.layers, mp.config);
}

}  // namespace segalm
