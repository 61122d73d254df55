// Cross-entropy cores and the masked-LM loss.
#pragma once

#include <cstdint>
#include <vector>

#include "segalm/tensor.hpp"

namespace segalm {

template <typename S>
struct CeResult {
    S loss_sum = S(0);   // summed over columns, not averaged
    int correct = 0;     // argmax hits
    Mat<S> dlogits;      // (softmax - onehot) per column; unscaled
};

// Per-column softmax cross entropy against integer targets.
template <typename S>
CeResult<S> cross_entropy_columns(const Mat<S>& logits, const std::vector<int>& targets,
                                  bool want_grad) {
    if (static_cast<Eigen::Index>(targets.size()) != logits.cols())
        throw ShapeMismatch("targets vs logits columns");
    CeResult<S> r;
    if (want_grad) r.dlogits.resize(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const int y = targets[static_cast<std::size_t>(c)];
        if (y < 0 || y >= logits.rows()) throw ShapeMismatch("target id outside logit range");
        Vec<S> col = logits.col(c);
        const S lse = log_sum_exp(col);
        r.loss_sum += lse - col(y);
        Eigen::Index best;
        col.maxCoeff(&best);
        if (static_cast<int>(best) == y) ++r.correct;
        if (want_grad) {
            Vec<S> p = softmax(col);
            p(y) -= S(1);
            r.dlogits.col(c) = p;
        }
    }
    return r;
}

struct MlmLossResult {
    double loss = 0.0;         // mean cross entropy over labeled positions
    double masked_accuracy = 0.0;
    int labeled = 0;
};

// logits: |V| x n over every position; labels: length n, -1 everywhere
// except the masked positions, which hold the original ids.
template <typename S>
MlmLossResult mlm_loss(const Mat<S>& logits, const std::vector<std::int32_t>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != logits.cols())
        throw ShapeMismatch("labels vs logits columns");
    std::vector<int> targets;
    Mat<S> picked(logits.rows(), 0);
    std::vector<Eigen::Index> cols;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0) cols.push_back(static_cast<Eigen::Index>(i));
    if (cols.empty()) throw NoLabels();
    picked.resize(logits.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        picked.col(static_cast<Eigen::Index>(k)) = logits.col(cols[k]);
        targets.push_back(labels[static_cast<std::size_t>(cols[k])]);
    }
    auto ce = cross_entropy_columns(picked, targets, /*want_grad=*/false);
    MlmLossResult r;
    r.labeled = static_cast<int>(cols.size());
    r.loss = static_cast<double>(ce.loss_sum) / r.labeled;
    r.masked_accuracy = static_cast<double>(ce.correct) / r.labeled;
    return r;
}

}  // namespace segalm
