// Input representation: token embedding plus scheme-dependent positional
// embeddings, summed per position, then layer norm and dropout.
#pragma once

#include <vector>

#include "segalm/example.hpp"
#include "segalm/params.hpp"
#include "segalm/tensor.hpp"

namespace segalm {

struct EmbedOptions {
    bool training = false;
    bool layer_norm = true;  // tests disable to probe the raw sum
    double dropout = 0.0;    // applied only in training mode
};

template <typename S>
struct EmbedCache {
    Mat<S> sum;  // pre-norm column sums
    LnCache<S> ln;
    Mat<S> dropmask;  // empty when dropout was not applied
    bool used_layer_norm = true;
};

namespace detail {

template <typename S>
void check_index(int idx, const Mat<S>& table, const char* axis) {
    if (idx < 0 || idx >= table.cols())
        throw IndexOutOfTable(std::string(axis) + "=" + std::to_string(idx) + " vs table of " +
                              std::to_string(table.cols()));
}

}  // namespace detail

// Column j of the result:
//   SEGA:           LN(E[id_j] + P^t[t_j] + P^s[s_j] + P^p[p_j])
//   GLOBAL:         LN(E[id_j] + G[j])
//   GLOBAL_PLUS_PS: LN(E[id_j] + G[j] + P^s[s_j] + P^p[p_j])
// The summation order is fixed as written.
template <typename S>
Mat<S> embed(const Example& ex, const EmbeddingParams<S>& emb, PositionScheme scheme,
             const EmbedOptions& opt = {}, EmbedCache<S>* cache = nullptr, Rng* dropout_rng = nullptr) {
    const Eigen::Index h = emb.token_table.rows();
    const int n = ex.max_len();
    Mat<S> sum(h, n);
    for (int j = 0; j < n; ++j) {
        const std::size_t js = static_cast<std::size_t>(j);
        detail::check_index(ex.ids[js], emb.token_table, "token id");
        Vec<S> col = emb.token_table.col(ex.ids[js]);
        switch (scheme) {
            case PositionScheme::SEGA:
                detail::check_index(ex.t[js], emb.tok_table, "t");
                detail::check_index(ex.s[js], emb.sent_table, "s");
                detail::check_index(ex.p[js], emb.para_table, "p");
                col += emb.tok_table.col(ex.t[js]);
                col += emb.sent_table.col(ex.s[js]);
                col += emb.para_table.col(ex.p[js]);
                break;
            case PositionScheme::GLOBAL:
                detail::check_index(j, emb.global_table, "position");
                col += emb.global_table.col(j);
                break;
            case PositionScheme::GLOBAL_PLUS_PS:
                detail::check_index(j, emb.global_table, "position");
                detail::check_index(ex.s[js], emb.sent_table, "s");
                detail::check_index(ex.p[js], emb.para_table, "p");
                col += emb.global_table.col(j);
                col += emb.sent_table.col(ex.s[js]);
                col += emb.para_table.col(ex.p[js]);
                break;
        }
        sum.col(j) = col;
    }

    Mat<S> out;
    if (opt.layer_norm) {
        out = layer_norm(sum, emb.ln_gain, emb.ln_bias, cache ? &cache->ln : nullptr);
    } else {
        out = sum;
    }
    if (cache) {
        cache->sum = sum;
        cache->used_layer_norm = opt.layer_norm;
        cache->dropmask.resize(0, 0);
    }
    if (opt.training && opt.dropout > 0.0) {
        if (!dropout_rng) throw Error("training-mode embed needs a dropout rng");
        Mat<S> mask = dropout_mask<S>(out.rows(), out.cols(), static_cast<S>(opt.dropout), *dropout_rng);
        out = out.cwiseProduct(mask);
        if (cache) cache->dropmask = std::move(mask);
    }
    return out;
}

// Scatters d(embed output) back into the embedding tables.
template <typename S>
void embed_backward(const Example& ex, const Mat<S>& dout_in, const EmbeddingParams<S>& emb,
                    PositionScheme scheme, const EmbedCache<S>& cache, EmbeddingParams<S>& grads) {
    Mat<S> dout = dout_in;
    if (cache.dropmask.size() > 0) dout = dout.cwiseProduct(cache.dropmask);
    Mat<S> dsum;
    if (cache.used_layer_norm) {
        dsum = layer_norm_backward(dout, emb.ln_gain, cache.ln, grads.ln_gain, grads.ln_bias);
    } else {
        dsum = std::move(dout);
    }
    const int n = ex.max_len();
    for (int j = 0; j < n; ++j) {
        const std::size_t js = static_cast<std::size_t>(j);
        grads.token_table.col(ex.ids[js]) += dsum.col(j);
        switch (scheme) {
            case PositionScheme::SEGA:
                grads.tok_table.col(ex.t[js]) += dsum.col(j);
                grads.sent_table.col(ex.s[js]) += dsum.col(j);
                grads.para_table.col(ex.p[js]) += dsum.col(j);
                break;
            case PositionScheme::GLOBAL:
                grads.global_table.col(j) += dsum.col(j);
                break;
            case PositionScheme::GLOBAL_PLUS_PS:
                grads.global_table.col(j) += dsum.col(j);
                grads.sent_table.col(ex.s[js]) += dsum.col(j);
                grads.para_table.col(ex.p[js]) += dsum.col(j);
                break;
        }
    }
}

}  // namespace segalm
