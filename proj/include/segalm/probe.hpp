// Linear probe: predict each token's sentence index from frozen final
// hidden states. Diagnostic for how much segment information the encoder
// keeps around.
#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include "segalm/losses.hpp"
#include "segalm/model.hpp"

namespace segalm {

struct ProbeReport {
    double train_accuracy = 0.0;
    double eval_accuracy = 0.0;
    double majority_baseline = 0.0;  // on the eval split
    int classes = 0;
    std::size_t train_tokens = 0;
    std::size_t eval_tokens = 0;
};

namespace detail {

struct ProbeData {
    Mat<double> features;  // H x N
    std::vector<int> labels;
};

}  // namespace detail

// Trains a one-layer softmax classifier with Adam on frozen hidden states.
// Examples with index % 5 == 4 form the eval split.
template <typename S>
ProbeReport probe_sentence_index(ModelParams<S>& mp, const std::vector<Example>& examples,
                                 const Vocab& vocab, std::uint64_t seed = 0, int iterations = 300,
                                 double lr = 0.05) {
    detail::ProbeData train, eval;
    std::vector<Vec<double>> train_cols, eval_cols;
    std::vector<int> train_labels, eval_labels;
    int max_label = 0;

    for (std::size_t idx = 0; idx < examples.size(); ++idx) {
        const Example& ex = examples[idx];
        auto states = model_forward_states(ex, mp);
        const Mat<S>& final_hidden = states.back();
        const bool is_eval = idx % 5 == 4;
        for (int j = 0; j < ex.max_len(); ++j) {
            const std::size_t js = static_cast<std::size_t>(j);
            if (!ex.attn_mask[js] || vocab.is_special(ex.ids[js])) continue;
            Vec<double> col = final_hidden.col(j).template cast<double>();
            const int label = ex.s[js];
            max_label = std::max(max_label, label);
            if (is_eval) {
                eval_cols.push_back(std::move(col));
                eval_labels.push_back(label);
            } else {
                train_cols.push_back(std::move(col));
                train_labels.push_back(label);
            }
        }
    }
    if (train_cols.empty() || eval_cols.empty()) throw Error("probe needs train and eval tokens");

    const int classes = max_label + 1;
    const Eigen::Index h = train_cols[0].size();
    auto to_mat = [&](const std::vector<Vec<double>>& cols) {
        Mat<double> m(h, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t i = 0; i < cols.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = cols[i];
        return m;
    };
    Mat<double> xtr = to_mat(train_cols), xev = to_mat(eval_cols);

    // multinomial logistic regression, full batch Adam
    Mat<double> w = Mat<double>::Zero(classes, h);
    Vec<double> b = Vec<double>::Zero(classes);
    Mat<double> mw = w, vw = w;
    Vec<double> mb = b, vb = b;
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double inv_n = 1.0 / static_cast<double>(train_cols.size());

    for (int it = 1; it <= iterations; ++it) {
        Mat<double> logits = w * xtr;
        logits.colwise() += b;
        auto ce = cross_entropy_columns(logits, train_labels, /*want_grad=*/true);
        Mat<double> dlogits = ce.dlogits * inv_n;
        Mat<double> gw = dlogits * xtr.transpose();
        Vec<double> gb = dlogits.rowwise().sum();

        const double bc1 = 1.0 - std::pow(beta1, it);
        const double bc2 = 1.0 - std::pow(beta2, it);
        mw = beta1 * mw + (1 - beta1) * gw;
        vw = beta2 * vw + (1 - beta2) * gw.cwiseProduct(gw);
        mb = beta1 * mb + (1 - beta1) * gb;
        vb = beta2 * vb + (1 - beta2) * gb.cwiseProduct(gb);
        w -= lr * ((mw / bc1).array() / ((vw / bc2).array().sqrt() + eps)).matrix();
        b -= lr * ((mb / bc1).array() / ((vb / bc2).array().sqrt() + eps)).matrix();
    }
    (void)seed;

    auto accuracy_of = [&](const Mat<double>& x, const std::vector<int>& labels) {
        Mat<double> logits = w * x;
        logits.colwise() += b;
        std::size_t hit = 0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            Eigen::Index best;
            logits.col(c).maxCoeff(&best);
            if (static_cast<int>(best) == labels[static_cast<std::size_t>(c)]) ++hit;
        }
        return static_cast<double>(hit) / static_cast<double>(logits.cols());
    };

    std::map<int, std::size_t> histogram;
    for (int l : eval_labels) ++histogram[l];
    std::size_t majority = 0;
    for (const auto& [label, count] : histogram) majority = std::max(majority, count);

    ProbeReport report;
    report.classes = classes;
    report.train_tokens = train_cols.size();
    report.eval_tokens = eval_cols.size();
    report.train_accuracy = accuracy_of(xtr, train_labels);
    report.eval_accuracy = accuracy_of(xev, eval_labels);
    report.majority_baseline = static_cast<double>(majority) / static_cast<double>(eval_labels.size());
    return report;
}

}  // namespace segalm
