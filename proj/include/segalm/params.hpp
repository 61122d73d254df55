// Model parameter containers and the named-tensor manifest that Adam,
// checkpointing, and the gradient checker iterate over.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "segalm/common.hpp"
#include "segalm/segmenter.hpp"
#include "segalm/tensor.hpp"

namespace segalm {

enum class PositionScheme { SEGA, GLOBAL, GLOBAL_PLUS_PS };

inline const char* scheme_name(PositionScheme s) {
    switch (s) {
        case PositionScheme::SEGA: return "sega";
        case PositionScheme::GLOBAL: return "global";
        case PositionScheme::GLOBAL_PLUS_PS: return "global_ps";
    }
    return "?";
}

inline PositionScheme scheme_from_name(const std::string& s) {
    if (s == "sega") return PositionScheme::SEGA;
    if (s == "global") return PositionScheme::GLOBAL;
    if (s == "global_ps") return PositionScheme::GLOBAL_PLUS_PS;
    throw ConfigError("unknown position scheme: " + s + " (want sega|global|global_ps)");
}

// BERT's table size for absolute positions; also the hard max_len.
inline constexpr int kMaxPositions = 512;

struct EncoderConfig {
    int layers = 12;
    int hidden = 768;
    int heads = 12;
    int ffn_width = 3072;
    double dropout = 0.1;

    static EncoderConfig base() { return {12, 768, 12, 4 * 768, 0.1}; }
    static EncoderConfig large() { return {24, 1024, 24, 4 * 1024, 0.1}; }
    static EncoderConfig toy() { return {2, 64, 4, 4 * 64, 0.1}; }

    void validate() const {
        if (layers <= 0 || hidden <= 0 || heads <= 0 || ffn_width <= 0)
            throw ConfigError("encoder dimensions must be positive");
        if (hidden % heads != 0) throw ConfigError("hidden width must be divisible by head count");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
    }

    int head_dim() const { return hidden / heads; }
};

inline EncoderConfig encoder_preset(const std::string& name) {
    if (name == "base") return EncoderConfig::base();
    if (name == "large") return EncoderConfig::large();
    if (name == "toy") return EncoderConfig::toy();
    throw ConfigError("unknown encoder preset: " + name + " (want toy|base|large)");
}

// The number of learned position parameters per scheme: replacing the 512
// global slots with 50+100+256 segment slots shrinks the table; keeping the
// global slots and adding paragraph+sentence grows it.
inline std::int64_t position_param_count(PositionScheme scheme, int hidden) {
    if (hidden <= 0) throw ConfigError("hidden width must be positive");
    const std::int64_t h = hidden;
    switch (scheme) {
        case PositionScheme::SEGA: return (50 + 100 + 256) * h;
        case PositionScheme::GLOBAL: return std::int64_t(kMaxPositions) * h;
        case PositionScheme::GLOBAL_PLUS_PS: return (kMaxPositions + 50 + 100) * h;
    }
    throw ConfigError("unknown scheme");
}

// Tables are stored hidden-major: column i is the embedding of entry i.
template <typename S>
struct EmbeddingParams {
    Mat<S> token_table;   // H x |V|
    Mat<S> para_table;    // H x caps.max_paragraphs      (SEGA, GLOBAL_PLUS_PS)
    Mat<S> sent_table;    // H x caps.max_sentences       (SEGA, GLOBAL_PLUS_PS)
    Mat<S> tok_table;     // H x caps.max_tokens_per_sentence  (SEGA)
    Mat<S> global_table;  // H x kMaxPositions            (GLOBAL, GLOBAL_PLUS_PS)
    Vec<S> ln_gain, ln_bias;
};

template <typename S>
struct LayerParams {
    Mat<S> wq, wk, wv, wo;  // H x H
    Vec<S> bq, bk, bv, bo;
    Mat<S> ffn_w1;  // ffn x H
    Vec<S> ffn_b1;
    Mat<S> ffn_w2;  // H x ffn
    Vec<S> ffn_b2;
    Vec<S> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

// Decoder weights are tied to the token table; only the transform and the
// output bias are owned here.
template <typename S>
struct MlmHeadParams {
    Mat<S> transform_w;  // H x H
    Vec<S> transform_b;
    Vec<S> ln_gain, ln_bias;
    Vec<S> out_bias;  // |V|
};

template <typename S>
struct ClassifierParams {
    Mat<S> pooler_w;  // H x H
    Vec<S> pooler_b;
    Mat<S> out_w;  // num_labels x H
    Vec<S> out_b;
};

template <typename S>
struct SpanHeadParams {
    Vec<S> start_w, end_w;  // H
    Vec<S> start_b, end_b;  // 1
};

template <typename S>
struct TensorRef {
    std::string name;
    S* data = nullptr;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    bool decay = false;  // weight decay applies (excludes biases and LN)

    Eigen::Index size() const { return rows * cols; }
};

template <typename S>
struct ModelParams {
    PositionScheme scheme = PositionScheme::SEGA;
    EncoderConfig config;
    int vocab_size = 0;
    SegmentCaps caps;
    EmbeddingParams<S> embedding;
    std::vector<LayerParams<S>> layers;
    MlmHeadParams<S> mlm;
    std::optional<ClassifierParams<S>> classifier;
    std::optional<SpanHeadParams<S>> span;

    // Canonical tensor order; checkpoints and optimizer moments follow it.
    std::vector<TensorRef<S>> manifest() {
        std::vector<TensorRef<S>> out;
        auto add = [&out](const std::string& name, Mat<S>& m, bool decay) {
            out.push_back(TensorRef<S>{name, m.data(), m.rows(), m.cols(), decay});
        };
        auto addv = [&out](const std::string& name, Vec<S>& v, bool decay) {
            out.push_back(TensorRef<S>{name, v.data(), v.rows(), 1, decay});
        };
        add("embed.token", embedding.token_table, true);
        add("embed.para", embedding.para_table, true);
        add("embed.sent", embedding.sent_table, true);
        add("embed.tok", embedding.tok_table, true);
        add("embed.global", embedding.global_table, true);
        addv("embed.ln_gain", embedding.ln_gain, false);
        addv("embed.ln_bias", embedding.ln_bias, false);
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::string pre = "enc." + std::to_string(i) + ".";
            LayerParams<S>& L = layers[i];
            add(pre + "attn.wq", L.wq, true);
            addv(pre + "attn.bq", L.bq, false);
            add(pre + "attn.wk", L.wk, true);
            addv(pre + "attn.bk", L.bk, false);
            add(pre + "attn.wv", L.wv, true);
            addv(pre + "attn.bv", L.bv, false);
            add(pre + "attn.wo", L.wo, true);
            addv(pre + "attn.bo", L.bo, false);
            addv(pre + "ln1.gain", L.ln1_gain, false);
            addv(pre + "ln1.bias", L.ln1_bias, false);
            add(pre + "ffn.w1", L.ffn_w1, true);
            addv(pre + "ffn.b1", L.ffn_b1, false);
            add(pre + "ffn.w2", L.ffn_w2, true);
            addv(pre + "ffn.b2", L.ffn_b2, false);
            addv(pre + "ln2.gain", L.ln2_gain, false);
            addv(pre + "ln2.bias", L.ln2_bias, false);
        }
        add("mlm.transform.w", mlm.transform_w, true);
        addv("mlm.transform.b", mlm.transform_b, false);
        addv("mlm.ln.gain", mlm.ln_gain, false);
        addv("mlm.ln.bias", mlm.ln_bias, false);
        addv("mlm.out_bias", mlm.out_bias, false);
        if (classifier) {
            add("cls.pooler.w", classifier->pooler_w, true);
            addv("cls.pooler.b", classifier->pooler_b, false);
            add("cls.out.w", classifier->out_w, true);
            addv("cls.out.b", classifier->out_b, false);
        }
        if (span) {
            addv("span.start_w", span->start_w, true);
            addv("span.start_b", span->start_b, false);
            addv("span.end_w", span->end_w, true);
            addv("span.end_b", span->end_b, false);
        }
        return out;
    }

    std::int64_t parameter_count() {
        std::int64_t n = 0;
        for (const auto& t : manifest()) n += t.size();
        return n;
    }
};

namespace detail {

template <typename S>
void size_embedding(EmbeddingParams<S>& e, PositionScheme scheme, const EncoderConfig& cfg,
                    int vocab_size, const SegmentCaps& caps) {
    const int h = cfg.hidden;
    e.token_table.setZero(h, vocab_size);
    const bool seg = scheme == PositionScheme::SEGA || scheme == PositionScheme::GLOBAL_PLUS_PS;
    const bool global = scheme == PositionScheme::GLOBAL || scheme == PositionScheme::GLOBAL_PLUS_PS;
    e.para_table.setZero(h, seg ? caps.max_paragraphs : 0);
    e.sent_table.setZero(h, seg ? caps.max_sentences : 0);
    e.tok_table.setZero(h, scheme == PositionScheme::SEGA ? caps.max_tokens_per_sentence : 0);
    e.global_table.setZero(h, global ? kMaxPositions : 0);
    e.ln_gain.setZero(h);
    e.ln_bias.setZero(h);
}

template <typename S>
void size_layer(LayerParams<S>& L, const EncoderConfig& cfg) {
    const int h = cfg.hidden, f = cfg.ffn_width;
    L.wq.setZero(h, h);
    L.wk.setZero(h, h);
    L.wv.setZero(h, h);
    L.wo.setZero(h, h);
    L.bq.setZero(h);
    L.bk.setZero(h);
    L.bv.setZero(h);
    L.bo.setZero(h);
    L.ffn_w1.setZero(f, h);
    L.ffn_b1.setZero(f);
    L.ffn_w2.setZero(h, f);
    L.ffn_b2.setZero(h);
    L.ln1_gain.setZero(h);
    L.ln1_bias.setZero(h);
    L.ln2_gain.setZero(h);
    L.ln2_bias.setZero(h);
}

}  // namespace detail

// Allocates every tensor zeroed, shaped per scheme/config.
template <typename S>
ModelParams<S> alloc_model(PositionScheme scheme, const EncoderConfig& cfg, int vocab_size,
                           const SegmentCaps& caps = {}) {
    cfg.validate();
    if (vocab_size <= 0) throw ConfigError("vocab size must be positive");
    ModelParams<S> mp;
    mp.scheme = scheme;
    mp.config = cfg;
    mp.vocab_size = vocab_size;
    mp.caps = caps;
    detail::size_embedding(mp.embedding, scheme, cfg, vocab_size, caps);
    mp.layers.resize(static_cast<std::size_t>(cfg.layers));
    for (auto& L : mp.layers) detail::size_layer(L, cfg);
    mp.mlm.transform_w.setZero(cfg.hidden, cfg.hidden);
    mp.mlm.transform_b.setZero(cfg.hidden);
    mp.mlm.ln_gain.setZero(cfg.hidden);
    mp.mlm.ln_bias.setZero(cfg.hidden);
    mp.mlm.out_bias.setZero(vocab_size);
    return mp;
}

template <typename S>
void attach_classifier(ModelParams<S>& mp, int num_labels) {
    if (num_labels < 1) throw ConfigError("num_labels must be >= 1");
    ClassifierParams<S> c;
    c.pooler_w.setZero(mp.config.hidden, mp.config.hidden);
    c.pooler_b.setZero(mp.config.hidden);
    c.out_w.setZero(num_labels, mp.config.hidden);
    c.out_b.setZero(num_labels);
    mp.classifier = std::move(c);
}

template <typename S>
void attach_span_head(ModelParams<S>& mp) {
    SpanHeadParams<S> s;
    s.start_w.setZero(mp.config.hidden);
    s.end_w.setZero(mp.config.hidden);
    s.start_b.setZero(1);
    s.end_b.setZero(1);
    mp.span = std::move(s);
}

// Truncated normal (stdev 0.02) on weights and embeddings, ones on LN gains,
// zeros elsewhere. Each tensor draws from its own derived stream so the
// values do not depend on manifest traversal details.
template <typename S>
void init_model(ModelParams<S>& mp, std::uint64_t seed, S stdev = S(0.02)) {
    auto tensors = mp.manifest();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        auto& t = tensors[i];
        if (t.size() == 0) continue;
        Eigen::Map<Mat<S>> view(t.data, t.rows, t.cols);
        const bool is_gain = t.name.find("gain") != std::string::npos;
        if (t.decay) {
            Rng rng = derive_rng(seed, stream::kInit, i);
            Mat<S> tmp(t.rows, t.cols);
            truncated_normal_fill(tmp, stdev, rng);
            view = tmp;
        } else if (is_gain) {
            view.setOnes();
        } else {
            view.setZero();
        }
    }
}

// Initialize only tensors whose name starts with prefix (fresh task heads on
// top of a loaded checkpoint).
template <typename S>
void init_tensors_matching(ModelParams<S>& mp, std::uint64_t seed, const std::string& prefix,
                           S stdev = S(0.02)) {
    auto tensors = mp.manifest();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        auto& t = tensors[i];
        if (t.size() == 0 || t.name.rfind(prefix, 0) != 0) continue;
        Eigen::Map<Mat<S>> view(t.data, t.rows, t.cols);
        if (t.decay) {
            Rng rng = derive_rng(seed, stream::kInit, 1000 + i);
            Mat<S> tmp(t.rows, t.cols);
            truncated_normal_fill(tmp, stdev, rng);
            view = tmp;
        } else if (t.name.find("gain") != std::string::npos) {
            view.setOnes();
        } else {
            view.setZero();
        }
    }
}

// Same shapes, everything zero. Used for gradients and Adam moments.
template <typename S>
ModelParams<S> zeros_like(const ModelParams<S>& mp) {
    ModelParams<S> z = alloc_model<S>(mp.scheme, mp.config, mp.vocab_size, mp.caps);
    if (mp.classifier) attach_classifier(z, static_cast<int>(mp.classifier->out_w.rows()));
    if (mp.span) attach_span_head(z);
    return z;
}

}  // namespace segalm
