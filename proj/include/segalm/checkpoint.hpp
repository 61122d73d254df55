// Named-tensor container files: model checkpoints ("SGCK") and optimizer
// state ("SGTS"). A JSON header line carries the shape manifest and the
// position scheme so a fine-tune run cannot silently mismatch.
#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "segalm/adam.hpp"
#include "segalm/params.hpp"

namespace segalm {

inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

template <typename S>
const char* dtype_name() {
    if constexpr (sizeof(S) == 4)
        return "f32";
    else
        return "f64";
}

inline void write_magic(std::ostream& out, const char magic[4]) {
    out.write(magic, 4);
    char vb[2] = {static_cast<char>(kCheckpointVersion & 0xFF),
                  static_cast<char>((kCheckpointVersion >> 8) & 0xFF)};
    out.write(vb, 2);
}

inline nlohmann::json read_container_header(std::istream& in, const char magic[4],
                                            const std::string& what) {
    char m[4];
    if (!in.read(m, 4) || std::memcmp(m, magic, 4) != 0)
        throw Error("not a " + what + " file (bad magic)");
    char vb[2];
    if (!in.read(vb, 2)) throw Error(what + ": truncated header");
    const int version = static_cast<unsigned char>(vb[0]) | (static_cast<unsigned char>(vb[1]) << 8);
    if (version != kCheckpointVersion)
        throw Error(what + ": unsupported version " + std::to_string(version));
    std::string line;
    if (!std::getline(in, line)) throw Error(what + ": missing JSON header");
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(what + ": bad JSON header");
    return j;
}

template <typename S>
void write_tensor_data(std::ostream& out, std::vector<TensorRef<S>> tensors) {
    for (const auto& t : tensors)
        out.write(reinterpret_cast<const char*>(t.data),
                  static_cast<std::streamsize>(sizeof(S) * static_cast<std::size_t>(t.size())));
}

template <typename S>
void read_tensor_data(std::istream& in, std::vector<TensorRef<S>> tensors,
                      const nlohmann::json& manifest, const std::string& what) {
    if (manifest.size() != tensors.size())
        throw ShapeMismatch(what + ": tensor count " + std::to_string(manifest.size()) + " vs " +
                            std::to_string(tensors.size()));
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& meta = manifest[i];
        if (meta.at("name").get<std::string>() != tensors[i].name ||
            meta.at("rows").get<Eigen::Index>() != tensors[i].rows ||
            meta.at("cols").get<Eigen::Index>() != tensors[i].cols)
            throw ShapeMismatch(what + ": tensor " + tensors[i].name);
        if (!in.read(reinterpret_cast<char*>(tensors[i].data),
                     static_cast<std::streamsize>(sizeof(S) * static_cast<std::size_t>(tensors[i].size()))))
            throw Error(what + ": truncated tensor data at " + tensors[i].name);
    }
}

template <typename S>
nlohmann::json manifest_json(std::vector<TensorRef<S>> tensors) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& t : tensors)
        out.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
    return out;
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, ModelParams<S>& mp, std::uint64_t vocab_hash) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint: " + path);
    static const char magic[4] = {'S', 'G', 'C', 'K'};
    detail::write_magic(out, magic);
    nlohmann::json header = {
        {"scheme", scheme_name(mp.scheme)},
        {"layers", mp.config.layers},
        {"hidden", mp.config.hidden},
        {"heads", mp.config.heads},
        {"ffn_width", mp.config.ffn_width},
        {"dropout", mp.config.dropout},
        {"vocab_size", mp.vocab_size},
        {"caps", {mp.caps.max_paragraphs, mp.caps.max_sentences, mp.caps.max_tokens_per_sentence}},
        {"vocab_hash", to_hex(vocab_hash)},
        {"dtype", detail::dtype_name<S>()},
        {"num_labels", mp.classifier ? static_cast<int>(mp.classifier->out_w.rows()) : 0},
        {"span_head", static_cast<bool>(mp.span)},
        {"tensors", detail::manifest_json(mp.manifest())}};
    std::string line = header.dump();
    line.push_back('\n');
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    detail::write_tensor_data(out, mp.manifest());
    if (!out) throw Error("checkpoint write failed: " + path);
}

struct CheckpointInfo {
    PositionScheme scheme;
    EncoderConfig config;
    int vocab_size = 0;
    SegmentCaps caps;
    std::string vocab_hash;
    int num_labels = 0;
    bool span_head = false;
};

inline CheckpointInfo peek_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    static const char magic[4] = {'S', 'G', 'C', 'K'};
    auto j = detail::read_container_header(in, magic, "checkpoint");
    CheckpointInfo info;
    info.scheme = scheme_from_name(j.at("scheme").get<std::string>());
    info.config.layers = j.at("layers").get<int>();
    info.config.hidden = j.at("hidden").get<int>();
    info.config.heads = j.at("heads").get<int>();
    info.config.ffn_width = j.at("ffn_width").get<int>();
    info.config.dropout = j.at("dropout").get<double>();
    info.vocab_size = j.at("vocab_size").get<int>();
    auto caps = j.at("caps");
    info.caps = SegmentCaps{caps[0].get<int>(), caps[1].get<int>(), caps[2].get<int>()};
    info.vocab_hash = j.at("vocab_hash").get<std::string>();
    info.num_labels = j.value("num_labels", 0);
    info.span_head = j.value("span_head", false);
    return info;
}

template <typename S>
ModelParams<S> load_checkpoint(const std::string& path, std::uint64_t expected_vocab_hash = 0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    static const char magic[4] = {'S', 'G', 'C', 'K'};
    auto j = detail::read_container_header(in, magic, "checkpoint");
    if (j.at("dtype").get<std::string>() != detail::dtype_name<S>())
        throw Error("checkpoint dtype " + j.at("dtype").get<std::string>() + " does not match");
    if (expected_vocab_hash != 0 && j.at("vocab_hash").get<std::string>() != to_hex(expected_vocab_hash))
        throw VocabMismatch();

    EncoderConfig cfg;
    cfg.layers = j.at("layers").get<int>();
    cfg.hidden = j.at("hidden").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.ffn_width = j.at("ffn_width").get<int>();
    cfg.dropout = j.at("dropout").get<double>();
    auto caps_j = j.at("caps");
    SegmentCaps caps{caps_j[0].get<int>(), caps_j[1].get<int>(), caps_j[2].get<int>()};
    auto mp = alloc_model<S>(scheme_from_name(j.at("scheme").get<std::string>()), cfg,
                             j.at("vocab_size").get<int>(), caps);
    if (int nl = j.value("num_labels", 0); nl > 0) attach_classifier(mp, nl);
    if (j.value("span_head", false)) attach_span_head(mp);
    detail::read_tensor_data(in, mp.manifest(), j.at("tensors"), "checkpoint");
    return mp;
}

// Optimizer/trainer state: scalars plus both moment sets, shaped like the
// model the state belongs to.
template <typename S>
void save_train_state(const std::string& path, TrainState<S>& st) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write train state: " + path);
    static const char magic[4] = {'S', 'G', 'T', 'S'};
    detail::write_magic(out, magic);
    nlohmann::json header = {{"step", st.step},
                             {"total_steps", st.total_steps},
                             {"peak_lr", st.peak_lr},
                             {"beta1", st.beta1},
                             {"beta2", st.beta2},
                             {"eps", st.eps},
                             {"weight_decay", st.weight_decay},
                             {"clip_norm", st.clip_norm},
                             {"seed", st.seed},
                             {"dtype", detail::dtype_name<S>()},
                             {"tensors", detail::manifest_json(st.m.manifest())}};
    std::string line = header.dump();
    line.push_back('\n');
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    detail::write_tensor_data(out, st.m.manifest());
    detail::write_tensor_data(out, st.v.manifest());
    if (!out) throw Error("train state write failed: " + path);
}

template <typename S>
TrainState<S> load_train_state(const std::string& path, const ModelParams<S>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open train state: " + path);
    static const char magic[4] = {'S', 'G', 'T', 'S'};
    auto j = detail::read_container_header(in, magic, "train state");
    if (j.at("dtype").get<std::string>() != detail::dtype_name<S>())
        throw Error("train state dtype mismatch");
    TrainState<S> st = make_train_state(params, j.at("total_steps").get<std::uint64_t>(),
                                        j.at("peak_lr").get<double>(), j.at("seed").get<std::uint64_t>());
    st.step = j.at("step").get<std::uint64_t>();
    st.beta1 = j.at("beta1").get<double>();
    st.beta2 = j.at("beta2").get<double>();
    st.eps = j.at("eps").get<double>();
    st.weight_decay = j.at("weight_decay").get<double>();
    st.clip_norm = j.at("clip_norm").get<double>();
    detail::read_tensor_data(in, st.m.manifest(), j.at("tensors"), "train state");
    detail::read_tensor_data(in, st.v.manifest(), j.at("tensors"), "train state");
    return st;
}

}  // namespace segalm
