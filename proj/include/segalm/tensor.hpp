// Dense-math building blocks shared by embeddings, encoder, and heads:
// layer norm forward/backward, GELU, masked softmax, initializers.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "segalm/common.hpp"

namespace segalm {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

inline constexpr double kLayerNormEps = 1e-12;

// Truncated normal init (resample outside 2 sigma), BERT convention.
template <typename S>
void truncated_normal_fill(Mat<S>& m, S stdev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, static_cast<double>(stdev));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            double v = dist(rng);
            while (std::abs(v) > 2.0 * static_cast<double>(stdev)) v = dist(rng);
            m(r, c) = static_cast<S>(v);
        }
    }
}

template <typename S>
S gelu_scalar(S x) {
    return S(0.5) * x * (S(1) + std::erf(x * S(0.7071067811865476)));
}

template <typename S>
S gelu_grad_scalar(S x) {
    const S cdf = S(0.5) * (S(1) + std::erf(x * S(0.7071067811865476)));
    const S pdf = S(0.3989422804014327) * std::exp(S(-0.5) * x * x);
    return cdf + x * pdf;
}

template <typename S>
Mat<S> gelu(const Mat<S>& x) {
    return x.unaryExpr([](S v) { return gelu_scalar(v); });
}

template <typename S>
Mat<S> gelu_grad(const Mat<S>& x) {
    return x.unaryExpr([](S v) { return gelu_grad_scalar(v); });
}

// Per-column layer norm cache: normalized values and 1/std per column.
template <typename S>
struct LnCache {
    Mat<S> xhat;
    Vec<S> inv_std;
};

// y = gain .* (x - mean)/sqrt(var + eps) + bias, per column.
template <typename S>
Mat<S> layer_norm(const Mat<S>& x, const Vec<S>& gain, const Vec<S>& bias, LnCache<S>* cache) {
    const Eigen::Index rows = x.rows(), cols = x.cols();
    Mat<S> out(rows, cols);
    if (cache) {
        cache->xhat.resize(rows, cols);
        cache->inv_std.resize(cols);
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
        const S mean = x.col(c).mean();
        Vec<S> centered = (x.col(c).array() - mean).matrix();
        const S var = centered.squaredNorm() / static_cast<S>(rows);
        const S inv = S(1) / std::sqrt(var + static_cast<S>(kLayerNormEps));
        Vec<S> xhat = centered * inv;
        out.col(c) = gain.cwiseProduct(xhat) + bias;
        if (cache) {
            cache->xhat.col(c) = xhat;
            cache->inv_std(c) = inv;
        }
    }
    return out;
}

// Backward of layer_norm. Accumulates into dgain/dbias, returns dx.
template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const Vec<S>& gain, const LnCache<S>& cache,
                           Vec<S>& dgain, Vec<S>& dbias) {
    const Eigen::Index rows = dy.rows(), cols = dy.cols();
    Mat<S> dx(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        dbias += dy.col(c);
        dgain += dy.col(c).cwiseProduct(cache.xhat.col(c));
        Vec<S> dxhat = dy.col(c).cwiseProduct(gain);
        const S mean_dxhat = dxhat.mean();
        const S mean_dxhat_xhat = dxhat.cwiseProduct(cache.xhat.col(c)).mean();
        dx.col(c) = (cache.inv_std(c) *
                     (dxhat.array() - mean_dxhat - cache.xhat.col(c).array() * mean_dxhat_xhat))
                        .matrix();
    }
    return dx;
}

// Softmax over the restricted key set per row; masked entries come out
// exactly zero so masked values can never leak into the weighted sum.
template <typename S>
void masked_softmax_rows(Mat<S>& scores, const std::vector<std::uint8_t>& key_mask) {
    const Eigen::Index rows = scores.rows(), cols = scores.cols();
    for (Eigen::Index r = 0; r < rows; ++r) {
        S best = std::numeric_limits<S>::lowest();
        bool any = false;
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (!key_mask[static_cast<std::size_t>(c)]) continue;
            any = true;
            best = std::max(best, scores(r, c));
        }
        if (!any) throw AllMasked();
        S denom = S(0);
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (key_mask[static_cast<std::size_t>(c)]) {
                S e = std::exp(scores(r, c) - best);
                scores(r, c) = e;
                denom += e;
            } else {
                scores(r, c) = S(0);
            }
        }
        scores.row(r) /= denom;
    }
}

// d(scores) for a row-softmax: w .* (dw - sum(dw .* w)) rowwise. Masked
// columns hold exact zeros in w, so they drop out naturally.
template <typename S>
Mat<S> softmax_rows_backward(const Mat<S>& w, const Mat<S>& dw) {
    Mat<S> ds(w.rows(), w.cols());
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
        const S dot = w.row(r).dot(dw.row(r));
        ds.row(r) = (w.row(r).array() * (dw.row(r).array() - dot)).matrix();
    }
    return ds;
}

// Plain column softmax (logits -> probabilities), numerically stable.
template <typename S>
Vec<S> softmax(const Vec<S>& logits) {
    const S best = logits.maxCoeff();
    Vec<S> e = (logits.array() - best).exp().matrix();
    return e / e.sum();
}

// log(sum(exp(x))) with the usual max shift.
template <typename S>
S log_sum_exp(const Vec<S>& x) {
    const S best = x.maxCoeff();
    return best + std::log((x.array() - best).exp().sum());
}

// Inverted dropout mask: entries are 0 or 1/(1-p).
template <typename S>
Mat<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, S rate, Rng& rng) {
    Mat<S> m(rows, cols);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const S keep_scale = S(1) / (S(1) - rate);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
            m(r, c) = (u(rng) < static_cast<double>(rate)) ? S(0) : keep_scale;
    return m;
}

}  // namespace segalm
