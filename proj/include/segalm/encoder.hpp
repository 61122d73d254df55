// Multi-layer bidirectional transformer encoder (post-norm, GELU FFN) with
// hand-written backward passes.
#pragma once

#include <cmath>
#include <vector>

#include "segalm/params.hpp"
#include "segalm/tensor.hpp"

namespace segalm {

// Single-head scaled dot-product attention over d x n inputs. Row i of the
// optional weights output is the distribution query i puts over the keys.
template <typename S>
Mat<S> scaled_dot_attention(const Mat<S>& q, const Mat<S>& k, const Mat<S>& v,
                            const std::vector<std::uint8_t>& mask, Mat<S>* weights_out = nullptr) {
    if (q.rows() != k.rows() || k.cols() != v.cols() || q.rows() != v.rows())
        throw ShapeMismatch("attention inputs disagree");
    if (static_cast<Eigen::Index>(mask.size()) != k.cols())
        throw ShapeMismatch("mask length vs key count");
    const S scale = S(1) / std::sqrt(static_cast<S>(q.rows()));
    Mat<S> scores = (q.transpose() * k) * scale;  // n_q x n_k
    masked_softmax_rows(scores, mask);
    if (weights_out) *weights_out = scores;
    return v * scores.transpose();  // d x n_q
}

template <typename S>
struct LayerCache {
    Mat<S> input;                   // H x n
    Mat<S> q, k, v;                 // H x n
    std::vector<Mat<S>> weights;    // per head, n x n
    Mat<S> ctx;                     // H x n, heads concatenated
    Mat<S> attn_dropmask;           // empty unless training dropout
    LnCache<S> ln1;
    Mat<S> x1;                      // H x n, post first norm
    Mat<S> ffn_pre;                 // ffn x n, pre-GELU
    Mat<S> ffn_act;                 // ffn x n, post-GELU
    Mat<S> ffn_dropmask;
    LnCache<S> ln2;
};

template <typename S>
struct EncoderCache {
    std::vector<LayerCache<S>> layers;
};

struct EncoderOptions {
    bool training = false;
};

namespace detail {

template <typename S>
Mat<S> linear(const Mat<S>& w, const Vec<S>& b, const Mat<S>& x) {
    Mat<S> y = w * x;
    y.colwise() += b;
    return y;
}

}  // namespace detail

// Returns all layer outputs; index 0 is the embedded input, index L the
// final contextual states.
template <typename S>
std::vector<Mat<S>> encoder_forward(const Mat<S>& embedded, const std::vector<std::uint8_t>& mask,
                                    const std::vector<LayerParams<S>>& layers,
                                    const EncoderConfig& cfg, const EncoderOptions& opt = {},
                                    EncoderCache<S>* cache = nullptr, Rng* dropout_rng = nullptr) {
    if (embedded.rows() != cfg.hidden) throw ShapeMismatch("embedded rows vs hidden width");
    if (static_cast<Eigen::Index>(mask.size()) != embedded.cols())
        throw ShapeMismatch("mask length vs sequence length");
    if (static_cast<int>(layers.size()) != cfg.layers)
        throw ShapeMismatch("layer params count vs config");
    const int d = cfg.head_dim();
    const Eigen::Index n = embedded.cols();
    const bool use_dropout = opt.training && cfg.dropout > 0.0;
    if (use_dropout && !dropout_rng) throw Error("training-mode encoder needs a dropout rng");

    std::vector<Mat<S>> states;
    states.reserve(static_cast<std::size_t>(cfg.layers) + 1);
    states.push_back(embedded);
    if (cache) cache->layers.assign(static_cast<std::size_t>(cfg.layers), LayerCache<S>{});

    for (int l = 0; l < cfg.layers; ++l) {
        const LayerParams<S>& L = layers[static_cast<std::size_t>(l)];
        const Mat<S>& x = states.back();
        LayerCache<S> scratch;
        LayerCache<S>& c = cache ? cache->layers[static_cast<std::size_t>(l)] : scratch;
        c.input = x;

        c.q = detail::linear(L.wq, L.bq, x);
        c.k = detail::linear(L.wk, L.bk, x);
        c.v = detail::linear(L.wv, L.bv, x);

        c.ctx.resize(cfg.hidden, n);
        c.weights.assign(static_cast<std::size_t>(cfg.heads), Mat<S>());
        const S scale = S(1) / std::sqrt(static_cast<S>(d));
        for (int h = 0; h < cfg.heads; ++h) {
            auto qh = c.q.middleRows(h * d, d);
            auto kh = c.k.middleRows(h * d, d);
            auto vh = c.v.middleRows(h * d, d);
            Mat<S> scores = (qh.transpose() * kh) * scale;
            masked_softmax_rows(scores, mask);
            c.ctx.middleRows(h * d, d) = vh * scores.transpose();
            c.weights[static_cast<std::size_t>(h)] = std::move(scores);
        }

        Mat<S> attn_out = detail::linear(L.wo, L.bo, c.ctx);
        if (use_dropout) {
            c.attn_dropmask =
                dropout_mask<S>(attn_out.rows(), attn_out.cols(), static_cast<S>(cfg.dropout), *dropout_rng);
            attn_out = attn_out.cwiseProduct(c.attn_dropmask);
        }
        c.x1 = layer_norm<S>(Mat<S>(x + attn_out), L.ln1_gain, L.ln1_bias, &c.ln1);

        c.ffn_pre = detail::linear(L.ffn_w1, L.ffn_b1, c.x1);
        c.ffn_act = gelu(c.ffn_pre);
        Mat<S> ffn_out = detail::linear(L.ffn_w2, L.ffn_b2, c.ffn_act);
        if (use_dropout) {
            c.ffn_dropmask =
                dropout_mask<S>(ffn_out.rows(), ffn_out.cols(), static_cast<S>(cfg.dropout), *dropout_rng);
            ffn_out = ffn_out.cwiseProduct(c.ffn_dropmask);
        }
        Mat<S> x2 = layer_norm<S>(Mat<S>(c.x1 + ffn_out), L.ln2_gain, L.ln2_bias, &c.ln2);
        states.push_back(std::move(x2));
    }
    return states;
}

// Backpropagates d(final state) to d(embedded), accumulating parameter
// gradients. The forward pass must have been run with a cache.
template <typename S>
Mat<S> encoder_backward(const Mat<S>& dlast, const std::vector<LayerParams<S>>& layers,
                        const EncoderConfig& cfg, const EncoderCache<S>& cache,
                        std::vector<LayerParams<S>>& grads) {
    const int d = cfg.head_dim();
    Mat<S> dx = dlast;
    for (int l = cfg.layers - 1; l >= 0; --l) {
        const LayerParams<S>& L = layers[static_cast<std::size_t>(l)];
        LayerParams<S>& G = grads[static_cast<std::size_t>(l)];
        const LayerCache<S>& c = cache.layers[static_cast<std::size_t>(l)];

        // x2 = LN2(x1 + drop(ffn_out))
        Mat<S> dr2 = layer_norm_backward(dx, L.ln2_gain, c.ln2, G.ln2_gain, G.ln2_bias);
        Mat<S> dx1 = dr2;
        Mat<S> dffn_out = dr2;
        if (c.ffn_dropmask.size() > 0) dffn_out = dffn_out.cwiseProduct(c.ffn_dropmask);

        // ffn_out = w2 * gelu(w1 * x1 + b1) + b2
        G.ffn_w2 += dffn_out * c.ffn_act.transpose();
        G.ffn_b2 += dffn_out.rowwise().sum();
        Mat<S> dact = L.ffn_w2.transpose() * dffn_out;
        Mat<S> dpre = dact.cwiseProduct(gelu_grad(c.ffn_pre));
        G.ffn_w1 += dpre * c.x1.transpose();
        G.ffn_b1 += dpre.rowwise().sum();
        dx1 += L.ffn_w1.transpose() * dpre;

        // x1 = LN1(x + drop(wo * ctx + bo))
        Mat<S> dr1 = layer_norm_backward(dx1, L.ln1_gain, c.ln1, G.ln1_gain, G.ln1_bias);
        dx = dr1;  // residual path into the layer input
        Mat<S> dattn_out = dr1;
        if (c.attn_dropmask.size() > 0) dattn_out = dattn_out.cwiseProduct(c.attn_dropmask);

        G.wo += dattn_out * c.ctx.transpose();
        G.bo += dattn_out.rowwise().sum();
        Mat<S> dctx = L.wo.transpose() * dattn_out;

        Mat<S> dq(c.q.rows(), c.q.cols()), dk(c.k.rows(), c.k.cols()), dv(c.v.rows(), c.v.cols());
        const S scale = S(1) / std::sqrt(static_cast<S>(d));
        for (int h = 0; h < cfg.heads; ++h) {
            auto qh = c.q.middleRows(h * d, d);
            auto kh = c.k.middleRows(h * d, d);
            auto vh = c.v.middleRows(h * d, d);
            const Mat<S>& w = c.weights[static_cast<std::size_t>(h)];
            auto dctx_h = dctx.middleRows(h * d, d);

            // ctx_h = v_h * w^T
            Mat<S> dw = dctx_h.transpose() * vh;          // n x n
            dv.middleRows(h * d, d) = dctx_h * w;         // d x n
            Mat<S> ds = softmax_rows_backward(w, dw);     // n x n
            dq.middleRows(h * d, d) = (kh * ds.transpose()) * scale;
            dk.middleRows(h * d, d) = (qh * ds) * scale;
        }

        G.wq += dq * c.input.transpose();
        G.bq += dq.rowwise().sum();
        G.wk += dk * c.input.transpose();
        G.bk += dk.rowwise().sum();
        G.wv += dv * c.input.transpose();
        G.bv += dv.rowwise().sum();
        dx += L.wq.transpose() * dq;
        dx += L.wk.transpose() * dk;
        dx += L.wv.transpose() * dv;
    }
    return dx;
}

}  // namespace segalm
