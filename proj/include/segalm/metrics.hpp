// Evaluation metrics: accuracy, binary F1, Matthews correlation, Spearman
// rank correlation, and SQuAD-style span EM/F1.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "segalm/common.hpp"

namespace segalm {

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& gold) {
    if (pred.size() != gold.size() || pred.empty()) throw ShapeMismatch("accuracy inputs");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == gold[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

// F1 of the positive class (label 1).
inline double binary_f1(const std::vector<int>& pred, const std::vector<int>& gold) {
    if (pred.size() != gold.size() || pred.empty()) throw ShapeMismatch("f1 inputs");
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == 1 && gold[i] == 1) ++tp;
        if (pred[i] == 1 && gold[i] == 0) ++fp;
        if (pred[i] == 0 && gold[i] == 1) ++fn;
    }
    if (tp == 0) return 0.0;
    const double precision = tp / (tp + fp);
    const double recall = tp / (tp + fn);
    return 2 * precision * recall / (precision + recall);
}

inline double matthews_corr(const std::vector<int>& pred, const std::vector<int>& gold) {
    if (pred.size() != gold.size() || pred.empty()) throw ShapeMismatch("matthews inputs");
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (gold[i] == 1)
            pred[i] == 1 ? ++tp : ++fn;
        else
            pred[i] == 1 ? ++fp : ++tn;
    }
    const double denom = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    if (denom == 0.0) return 0.0;
    return (tp * tn - fp * fn) / denom;
}

// Average ranks with ties shared, then Pearson on the ranks.
inline std::vector<double> average_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double pearson_corr(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw ShapeMismatch("pearson inputs");
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

inline double spearman_corr(const std::vector<double>& xs, const std::vector<double>& ys) {
    return pearson_corr(average_ranks(xs), average_ranks(ys));
}

// Lowercase, strip punctuation, drop articles, collapse whitespace.
inline std::string normalize_answer(const std::string& text) {
    std::string lowered;
    lowered.reserve(text.size());
    for (char c : text) {
        unsigned char u = static_cast<unsigned char>(c);
        if (std::ispunct(u)) continue;
        lowered.push_back(static_cast<char>(std::tolower(u)));
    }
    std::istringstream words(lowered);
    std::string w, out;
    while (words >> w) {
        if (w == "a" || w == "an" || w == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

inline std::vector<std::string> answer_tokens(const std::string& text) {
    std::istringstream in(normalize_answer(text));
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

inline double span_exact_match(const std::string& pred, const std::string& gold) {
    return normalize_answer(pred) == normalize_answer(gold) ? 1.0 : 0.0;
}

// Token-multiset overlap F1 between prediction and gold.
inline double span_f1(const std::string& pred, const std::string& gold) {
    auto p = answer_tokens(pred);
    auto g = answer_tokens(gold);
    if (p.empty() || g.empty()) return p == g ? 1.0 : 0.0;
    std::map<std::string, int> gold_counts;
    for (const auto& t : g) ++gold_counts[t];
    int common = 0;
    for (const auto& t : p) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            ++common;
            --it->second;
        }
    }
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / static_cast<double>(p.size());
    const double recall = static_cast<double>(common) / static_cast<double>(g.size());
    return 2 * precision * recall / (precision + recall);
}

}  // namespace segalm
