// Masked-LM pretraining loop: deterministic batching, static masking at
// batch draw, forward/backward, clip, Adam, JSONL metrics, checkpoints.
#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "segalm/adam.hpp"
#include "segalm/checkpoint.hpp"
#include "segalm/example_io.hpp"
#include "segalm/masking.hpp"
#include "segalm/model.hpp"

namespace segalm {

struct PretrainConfig {
    std::uint64_t total_steps = 2000;
    int batch_size = 8;
    double peak_lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    std::uint64_t seed = 42;
    std::uint64_t checkpoint_every = 500;
    int threads = 1;
    MaskingPolicy masking;
};

struct MetricsRow {
    std::uint64_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
    double masked_acc = 0.0;
    std::int64_t wall_ms = 0;
};

struct PretrainResult {
    std::string final_checkpoint_dir;
    std::vector<MetricsRow> metrics;
    std::uint64_t steps_run = 0;
};

namespace detail {

// Deterministic shuffled epoch order; the permutation for epoch e depends
// only on (seed, e), so any step can be replayed after a resume.
class EpochSampler {
public:
    EpochSampler(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {}

    std::size_t index_for(std::uint64_t global_pos) {
        const std::uint64_t epoch = global_pos / n_;
        if (epoch != cached_epoch_ || perm_.empty()) {
            perm_.resize(n_);
            std::iota(perm_.begin(), perm_.end(), std::size_t{0});
            Rng rng = derive_rng(seed_, stream::kShuffle, epoch);
            std::shuffle(perm_.begin(), perm_.end(), rng);
            cached_epoch_ = epoch;
        }
        return perm_[static_cast<std::size_t>(global_pos % n_)];
    }

private:
    std::size_t n_;
    std::uint64_t seed_;
    std::uint64_t cached_epoch_ = ~0ull;
    std::vector<std::size_t> perm_;
};

template <typename S>
struct ExampleWork {
    const Example* original = nullptr;
    MaskedExample masked;
    double loss_sum = 0.0;
    int correct = 0;
    int labels = 0;
    ModelParams<S>* grads = nullptr;
};

}  // namespace detail

// One training step over a batch: masking happened already (label counts
// feed the loss scale); returns (mean loss, masked accuracy).
template <typename S>
std::pair<double, double> pretrain_step(ModelParams<S>& mp, TrainState<S>& state,
                                        std::vector<detail::ExampleWork<S>>& batch,
                                        std::vector<ModelParams<S>>& grad_buffers,
                                        ModelParams<S>& grads, const PretrainConfig& cfg,
                                        std::uint64_t step_index) {
    int total_labels = 0;
    for (auto& w : batch) total_labels += w.masked.num_labeled;
    if (total_labels == 0) throw NoLabels();
    const S inv_labels = S(1) / static_cast<S>(total_labels);

    parallel_for(batch.size(), cfg.threads, [&](std::size_t i) {
        auto& w = batch[i];
        ModelParams<S>& g = *w.grads;
        // fresh dropout stream per (seed, step, example slot)
        Rng drop_rng = derive_rng(cfg.seed, stream::kDropout, step_index * 4096 + i);
        EmbedOptions eopt;
        eopt.training = true;
        eopt.dropout = mp.config.dropout;
        EmbedCache<S> ec;
        Mat<S> x = embed(w.masked.example, mp.embedding, mp.scheme, eopt, &ec, &drop_rng);
        EncoderCache<S> enc;
        EncoderOptions enopt;
        enopt.training = true;
        auto states = encoder_forward(x, w.masked.example.attn_mask, mp.layers, mp.config, enopt,
                                      &enc, &drop_rng);
        std::vector<int> positions;
        std::vector<int> targets;
        for (std::size_t p = 0; p < w.masked.labels.size(); ++p)
            if (w.masked.labels[p] >= 0) {
                positions.push_back(static_cast<int>(p));
                targets.push_back(w.masked.labels[p]);
            }
        MlmHeadCache<S> hc;
        Mat<S> logits = mlm_head_forward(states.back(), positions, mp, &hc);
        auto ce = cross_entropy_columns(logits, targets, /*want_grad=*/true);
        w.loss_sum = static_cast<double>(ce.loss_sum);
        w.correct = ce.correct;
        w.labels = static_cast<int>(targets.size());

        Mat<S> dlogits = ce.dlogits * inv_labels;
        Mat<S> dfinal = Mat<S>::Zero(states.back().rows(), states.back().cols());
        mlm_head_backward(dlogits, mp, hc, g, dfinal);
        Mat<S> dx = encoder_backward(dfinal, mp.layers, mp.config, enc, g.layers);
        embed_backward(w.masked.example, dx, mp.embedding, mp.scheme, ec, g.embedding);
    });

    // ordered reduction keeps the result identical for any thread count
    auto dst = grads.manifest();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto src = grad_buffers[i].manifest();
        for (std::size_t t = 0; t < dst.size(); ++t) {
            Eigen::Map<Mat<S>> d(dst[t].data, dst[t].rows, dst[t].cols);
            Eigen::Map<const Mat<S>> s(src[t].data, src[t].rows, src[t].cols);
            d += s;
        }
    }

    clip_global_norm(grads, cfg.clip_norm);
    adam_step(mp, grads, state);

    double loss_sum = 0.0;
    int correct = 0;
    for (auto& w : batch) {
        loss_sum += w.loss_sum;
        correct += w.correct;
    }
    return {loss_sum / total_labels, static_cast<double>(correct) / total_labels};
}

// Full pretraining run. Checkpoints land in out_dir/checkpoint-step<k> and
// out_dir/checkpoint-final; metrics append to out_dir/metrics.jsonl.
template <typename S>
PretrainResult pretrain(ModelParams<S>& mp, TrainState<S>& state, const std::vector<Example>& all,
                        const Vocab& vocab, const PretrainConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::vector<const Example*> dataset;
    for (const auto& ex : all)
        if (ex.kind == ExampleKind::Pretrain) dataset.push_back(&ex);
    if (dataset.empty() && state.step < state.total_steps)
        throw Error("no pretraining examples in dataset");

    fs::create_directories(out_dir);
    std::ofstream metrics_out(fs::path(out_dir) / "metrics.jsonl", std::ios::app);
    if (!metrics_out) throw Error("cannot open metrics log in " + out_dir);

    PretrainResult result;
    const int B = cfg.batch_size;
    std::vector<ModelParams<S>> grad_buffers;
    for (int i = 0; i < B; ++i) grad_buffers.push_back(zeros_like(mp));
    ModelParams<S> grads = zeros_like(mp);
    detail::EpochSampler sampler(dataset.size(), cfg.seed);

    auto save_at = [&](const std::string& tag) {
        fs::path dir = fs::path(out_dir) / ("checkpoint-" + tag);
        fs::create_directories(dir);
        save_checkpoint((dir / "params.sgck").string(), mp, vocab.hash());
        save_train_state((dir / "train_state.sgts").string(), state);
        return dir.string();
    };

    if (state.total_steps == 0) {
        result.final_checkpoint_dir = save_at("final");
        return result;
    }

    for (std::uint64_t step = state.step + 1; step <= state.total_steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<detail::ExampleWork<S>> batch(static_cast<std::size_t>(B));
        const std::uint64_t base = (step - 1) * static_cast<std::uint64_t>(B);
        for (int i = 0; i < B; ++i) {
            auto& w = batch[static_cast<std::size_t>(i)];
            w.original = dataset[sampler.index_for(base + static_cast<std::uint64_t>(i))];
            Rng mask_rng = derive_rng(cfg.seed, stream::kMasking, base + static_cast<std::uint64_t>(i));
            w.masked = apply_masking(*w.original, cfg.masking, vocab, mask_rng);
            auto bt = grad_buffers[static_cast<std::size_t>(i)].manifest();
            for (auto& t : bt) Eigen::Map<Mat<S>>(t.data, t.rows, t.cols).setZero();
            w.grads = &grad_buffers[static_cast<std::size_t>(i)];
        }
        auto gt = grads.manifest();
        for (auto& t : gt) Eigen::Map<Mat<S>>(t.data, t.rows, t.cols).setZero();

        auto [loss, acc] = pretrain_step(mp, state, batch, grad_buffers, grads, cfg, step);
        const auto t1 = std::chrono::steady_clock::now();

        MetricsRow row;
        row.step = step;
        row.lr = lr_at(step, state.total_steps, state.peak_lr);
        row.loss = loss;
        row.masked_acc = acc;
        row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
        nlohmann::json j = {{"step", row.step},
                            {"lr", row.lr},
                            {"loss", row.loss},
                            {"masked_acc", row.masked_acc},
                            {"wall_ms", row.wall_ms}};
        metrics_out << j.dump() << "\n";
        metrics_out.flush();
        state.record(row.step, row.loss);
        result.metrics.push_back(row);
        ++result.steps_run;

        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != state.total_steps)
            save_at("step" + std::to_string(step));
    }
    result.final_checkpoint_dir = save_at("final");
    return result;
}

}  // namespace segalm
