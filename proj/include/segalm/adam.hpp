// Bias-corrected Adam with decoupled weight decay and the warmup/decay
// schedule, plus global-norm gradient clipping.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "segalm/params.hpp"
#include "segalm/schedule.hpp"

namespace segalm {

template <typename S>
struct TrainState {
    std::uint64_t step = 0;
    std::uint64_t total_steps = 0;
    double peak_lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    std::uint64_t seed = 0;

    ModelParams<S> m;  // first moments
    ModelParams<S> v;  // second moments

    // Small in-memory ring of recent losses; the durable log is the JSONL
    // metrics file the trainer writes.
    struct MetricPoint {
        std::uint64_t step = 0;
        double loss = 0.0;
    };
    static constexpr std::size_t kRingCapacity = 256;
    std::vector<MetricPoint> ring;
    std::size_t ring_next = 0;

    void record(std::uint64_t s, double loss) {
        if (ring.size() < kRingCapacity) {
            ring.push_back({s, loss});
        } else {
            ring[ring_next] = {s, loss};
            ring_next = (ring_next + 1) % kRingCapacity;
        }
    }
};

template <typename S>
TrainState<S> make_train_state(const ModelParams<S>& params, std::uint64_t total_steps,
                               double peak_lr = 1e-4, std::uint64_t seed = 0) {
    TrainState<S> st;
    st.total_steps = total_steps;
    st.peak_lr = peak_lr;
    st.seed = seed;
    st.m = zeros_like(params);
    st.v = zeros_like(params);
    return st;
}

// Global L2 norm across every gradient tensor (accumulated in double); if it
// exceeds max_norm the gradients are scaled down in place. Returns the
// pre-clip norm.
template <typename S>
double clip_global_norm(ModelParams<S>& grads, double max_norm) {
    auto tensors = grads.manifest();
    double sumsq = 0.0;
    for (const auto& t : tensors) {
        Eigen::Map<const Mat<S>> g(t.data, t.rows, t.cols);
        sumsq += g.template cast<double>().squaredNorm();
    }
    const double norm = std::sqrt(sumsq);
    if (max_norm > 0.0 && norm > max_norm) {
        const S scale = static_cast<S>(max_norm / norm);
        for (auto& t : tensors) {
            Eigen::Map<Mat<S>> g(t.data, t.rows, t.cols);
            g *= scale;
        }
    }
    return norm;
}

// One optimizer step. The learning rate comes from the schedule at the
// 1-based update index; weight decay skips biases and layer-norm tensors.
template <typename S>
void adam_step(ModelParams<S>& params, ModelParams<S>& grads, TrainState<S>& state) {
    if (state.step >= state.total_steps) throw Error("adam_step past total_steps");
    auto p_tensors = params.manifest();
    auto g_tensors = grads.manifest();
    auto m_tensors = state.m.manifest();
    auto v_tensors = state.v.manifest();
    if (p_tensors.size() != g_tensors.size() || p_tensors.size() != m_tensors.size())
        throw ShapeMismatch("parameter/gradient/moment manifests differ");

    for (std::size_t i = 0; i < g_tensors.size(); ++i) {
        if (p_tensors[i].size() != g_tensors[i].size())
            throw ShapeMismatch("gradient shape for " + p_tensors[i].name);
        Eigen::Map<const Mat<S>> g(g_tensors[i].data, g_tensors[i].rows, g_tensors[i].cols);
        if (!g.allFinite()) throw NonFiniteGradient(p_tensors[i].name);
    }

    const std::uint64_t t = state.step + 1;
    const double lr = lr_at(t, state.total_steps, state.peak_lr);
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));

    for (std::size_t i = 0; i < p_tensors.size(); ++i) {
        if (p_tensors[i].size() == 0) continue;
        Eigen::Map<Mat<S>> p(p_tensors[i].data, p_tensors[i].rows, p_tensors[i].cols);
        Eigen::Map<Mat<S>> g(g_tensors[i].data, g_tensors[i].rows, g_tensors[i].cols);
        Eigen::Map<Mat<S>> m(m_tensors[i].data, m_tensors[i].rows, m_tensors[i].cols);
        Eigen::Map<Mat<S>> v(v_tensors[i].data, v_tensors[i].rows, v_tensors[i].cols);

        m = static_cast<S>(state.beta1) * m + static_cast<S>(1.0 - state.beta1) * g;
        v = static_cast<S>(state.beta2) * v + static_cast<S>(1.0 - state.beta2) * g.cwiseProduct(g);

        Mat<S> m_hat = m / static_cast<S>(bc1);
        Mat<S> v_hat = v / static_cast<S>(bc2);
        Mat<S> update =
            (m_hat.array() / (v_hat.array().sqrt() + static_cast<S>(state.eps))).matrix() *
            static_cast<S>(lr);
        if (p_tensors[i].decay && state.weight_decay > 0.0)
            update += p * static_cast<S>(lr * state.weight_decay);
        p -= update;
    }
    ++state.step;
}

}  // namespace segalm
