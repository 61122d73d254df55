// Static masked-LM corruption: 15% of eligible positions selected; of
// those, 80% become [MASK], 10% a random vocab id, 10% stay unchanged.
#pragma once

#include <cstdint>
#include <vector>

#include "segalm/common.hpp"
#include "segalm/example.hpp"
#include "segalm/vocab.hpp"

namespace segalm {

struct MaskingPolicy {
    double select_prob = 0.15;
    double mask_prob = 0.8;
    double random_prob = 0.1;
    double keep_prob = 0.1;
    bool force_at_least_one = true;

    void validate() const {
        const double sum = mask_prob + random_prob + keep_prob;
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("mask/random/keep must sum to 1");
        if (select_prob < 0.0 || select_prob > 1.0) throw ConfigError("select_prob outside [0,1]");
    }
};

struct MaskedExample {
    Example example;                  // ids after corruption
    std::vector<std::int32_t> labels; // original ids at selected positions, -1 elsewhere
    int num_labeled = 0;
};

inline bool maskable(const Example& ex, std::size_t i, const Vocab& vocab) {
    return ex.attn_mask[i] == 1 && !vocab.is_special(ex.ids[i]);
}

inline MaskedExample apply_masking(const Example& ex, const MaskingPolicy& policy,
                                   const Vocab& vocab, Rng& rng) {
    policy.validate();
    if (ex.kind != ExampleKind::Pretrain) throw Error("masking applies to pretraining examples");
    MaskedExample out;
    out.example = ex;
    out.labels.assign(ex.ids.size(), -1);

    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < ex.ids.size(); ++i)
        if (maskable(ex, i, vocab)) eligible.push_back(i);
    if (eligible.empty()) throw NoEligiblePositions();

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> any_id(0, vocab.size() - 1);

    auto corrupt = [&](std::size_t i) {
        out.labels[i] = ex.ids[i];
        ++out.num_labeled;
        const double action = unit(rng);
        if (action < policy.mask_prob) {
            out.example.ids[i] = vocab.mask_id();
        } else if (action < policy.mask_prob + policy.random_prob) {
            out.example.ids[i] = any_id(rng);
        }  // else: keep the original id
    };

    for (std::size_t i : eligible)
        if (unit(rng) < policy.select_prob) corrupt(i);

    if (out.num_labeled == 0 && policy.force_at_least_one) {
        std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
        corrupt(eligible[pick(rng)]);
    }
    return out;
}

}  // namespace segalm
