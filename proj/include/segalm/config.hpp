// Run configuration: a flat key = value file with CLI overrides, validated
// in one pass that reports every violation at once.
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "segalm/masking.hpp"
#include "segalm/params.hpp"

namespace segalm {

struct RunConfig {
    // model
    std::string scheme = "sega";       // sega | global | global_ps
    std::string encoder = "toy";       // toy | base | large
    int max_len = 512;
    SegmentCaps caps;
    double dropout = 0.1;

    // paths
    std::string vocab;
    std::string corpus;
    std::string examples;
    std::string abbrev;
    std::string out_dir = "runs/default";
    std::string checkpoint;
    std::string train_data;
    std::string dev_data;

    // pretraining
    std::uint64_t seed = 42;
    std::uint64_t total_steps = 2000;
    int batch_size = 8;
    double peak_lr = 1e-4;
    std::uint64_t checkpoint_every = 500;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    double select_prob = 0.15;
    double mask_prob = 0.8;
    double random_prob = 0.1;
    double keep_prob = 0.1;

    // fine-tuning
    std::string task = "classify";
    double ft_lr = 3e-5;
    int ft_batch = 256;
    int ft_epochs = 3;
    int num_labels = 2;
    int max_answer_len = 30;

    // execution
    int threads = 1;
    bool deterministic = false;
    bool lowercase = true;

    PositionScheme scheme_enum() const { return scheme_from_name(scheme); }
    EncoderConfig encoder_config() const {
        EncoderConfig cfg = encoder_preset(encoder);
        cfg.dropout = dropout;
        return cfg;
    }
    MaskingPolicy masking_policy() const {
        MaskingPolicy p;
        p.select_prob = select_prob;
        p.mask_prob = mask_prob;
        p.random_prob = random_prob;
        p.keep_prob = keep_prob;
        return p;
    }
    int effective_threads() const { return deterministic ? 1 : resolve_threads(threads); }

    // Every violation at once, so an operator fixes the file in one pass.
    std::vector<std::string> violations() const {
        std::vector<std::string> v;
        auto check = [&](bool ok, const std::string& msg) {
            if (!ok) v.push_back(msg);
        };
        try {
            scheme_from_name(scheme);
        } catch (const ConfigError& e) {
            v.push_back(e.what());
        }
        try {
            encoder_config().validate();
        } catch (const ConfigError& e) {
            v.push_back(e.what());
        }
        check(max_len >= 8 && max_len <= kMaxPositions,
              "max_len must be in [8, " + std::to_string(kMaxPositions) + "]");
        check(caps.valid(), "segment caps must be positive");
        check(batch_size > 0, "batch_size must be positive");
        check(peak_lr > 0, "peak_lr must be positive");
        check(threads >= 0, "threads must be >= 0");
        check(ft_lr > 0 && ft_batch > 0 && ft_epochs > 0, "finetune lr/batch/epochs must be positive");
        check(num_labels >= 1, "num_labels must be >= 1");
        check(max_answer_len >= 1, "max_answer_len must be >= 1");
        try {
            masking_policy().validate();
        } catch (const ConfigError& e) {
            v.push_back(e.what());
        }
        try {
            task_from_acceptable(task);
        } catch (const ConfigError& e) {
            v.push_back(e.what());
        }
        return v;
    }

    void validate() const {
        auto v = violations();
        if (v.empty()) return;
        std::string all = "invalid configuration:";
        for (const auto& msg : v) all += "\n  - " + msg;
        throw ConfigError(all);
    }

    void set(const std::string& key, const std::string& value);
    std::string serialize() const;

    static RunConfig from_file(const std::string& path);

private:
    static void task_from_acceptable(const std::string& t) {
        if (t != "classify" && t != "regress" && t != "span")
            throw ConfigError("unknown task: " + t + " (want classify|regress|span)");
    }
};

namespace detail {
inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("expected a boolean, got \"" + v + "\"");
}
}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
    try {
        if (key == "scheme") scheme = value;
        else if (key == "encoder") encoder = value;
        else if (key == "max_len") max_len = std::stoi(value);
        else if (key == "max_paragraphs") caps.max_paragraphs = std::stoi(value);
        else if (key == "max_sentences") caps.max_sentences = std::stoi(value);
        else if (key == "max_tokens_per_sentence") caps.max_tokens_per_sentence = std::stoi(value);
        else if (key == "dropout") dropout = std::stod(value);
        else if (key == "vocab") vocab = value;
        else if (key == "corpus") corpus = value;
        else if (key == "examples") examples = value;
        else if (key == "abbrev") abbrev = value;
        else if (key == "out_dir") out_dir = value;
        else if (key == "checkpoint") checkpoint = value;
        else if (key == "train_data") train_data = value;
        else if (key == "dev_data") dev_data = value;
        else if (key == "seed") seed = std::stoull(value);
        else if (key == "total_steps") total_steps = std::stoull(value);
        else if (key == "batch_size") batch_size = std::stoi(value);
        else if (key == "peak_lr") peak_lr = std::stod(value);
        else if (key == "checkpoint_every") checkpoint_every = std::stoull(value);
        else if (key == "weight_decay") weight_decay = std::stod(value);
        else if (key == "clip_norm") clip_norm = std::stod(value);
        else if (key == "select_prob") select_prob = std::stod(value);
        else if (key == "mask_prob") mask_prob = std::stod(value);
        else if (key == "random_prob") random_prob = std::stod(value);
        else if (key == "keep_prob") keep_prob = std::stod(value);
        else if (key == "task") task = value;
        else if (key == "ft_lr") ft_lr = std::stod(value);
        else if (key == "ft_batch") ft_batch = std::stoi(value);
        else if (key == "ft_epochs") ft_epochs = std::stoi(value);
        else if (key == "num_labels") num_labels = std::stoi(value);
        else if (key == "max_answer_len") max_answer_len = std::stoi(value);
        else if (key == "threads") threads = std::stoi(value);
        else if (key == "deterministic") deterministic = detail::parse_bool(value);
        else if (key == "lowercase") lowercase = detail::parse_bool(value);
        else throw ConfigError("unknown configuration key: " + key);
    } catch (const std::invalid_argument&) {
        throw ConfigError("bad value for " + key + ": \"" + value + "\"");
    } catch (const std::out_of_range&) {
        throw ConfigError("value out of range for " + key + ": \"" + value + "\"");
    }
}

inline std::string RunConfig::serialize() const {
    std::ostringstream out;
    out << "scheme = " << scheme << "\n";
    out << "encoder = " << encoder << "\n";
    out << "max_len = " << max_len << "\n";
    out << "max_paragraphs = " << caps.max_paragraphs << "\n";
    out << "max_sentences = " << caps.max_sentences << "\n";
    out << "max_tokens_per_sentence = " << caps.max_tokens_per_sentence << "\n";
    out << "dropout = " << dropout << "\n";
    if (!vocab.empty()) out << "vocab = " << vocab << "\n";
    if (!corpus.empty()) out << "corpus = " << corpus << "\n";
    if (!examples.empty()) out << "examples = " << examples << "\n";
    if (!abbrev.empty()) out << "abbrev = " << abbrev << "\n";
    out << "out_dir = " << out_dir << "\n";
    if (!checkpoint.empty()) out << "checkpoint = " << checkpoint << "\n";
    if (!train_data.empty()) out << "train_data = " << train_data << "\n";
    if (!dev_data.empty()) out << "dev_data = " << dev_data << "\n";
    out << "seed = " << seed << "\n";
    out << "total_steps = " << total_steps << "\n";
    out << "batch_size = " << batch_size << "\n";
    out << "peak_lr = " << peak_lr << "\n";
    out << "checkpoint_every = " << checkpoint_every << "\n";
    out << "weight_decay = " << weight_decay << "\n";
    out << "clip_norm = " << clip_norm << "\n";
    out << "select_prob = " << select_prob << "\n";
    out << "mask_prob = " << mask_prob << "\n";
    out << "random_prob = " << random_prob << "\n";
    out << "keep_prob = " << keep_prob << "\n";
    out << "task = " << task << "\n";
    out << "ft_lr = " << ft_lr << "\n";
    out << "ft_batch = " << ft_batch << "\n";
    out << "ft_epochs = " << ft_epochs << "\n";
    out << "num_labels = " << num_labels << "\n";
    out << "max_answer_len = " << max_answer_len << "\n";
    out << "threads = " << threads << "\n";
    out << "deterministic = " << (deterministic ? "true" : "false") << "\n";
    out << "lowercase = " << (lowercase ? "true" : "false") << "\n";
    return out.str();
}

inline RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> problems;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos) {
            problems.push_back(path + ":" + std::to_string(line_no) + ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const char* ws = " \t\r";
            s.erase(0, s.find_first_not_of(ws));
            auto last = s.find_last_not_of(ws);
            s.erase(last == std::string::npos ? 0 : last + 1);
            return s;
        };
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            problems.push_back(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!problems.empty()) {
        std::string all = "configuration errors:";
        for (const auto& p : problems) all += "\n  - " + p;
        throw ConfigError(all);
    }
    return cfg;
}

inline void write_config_snapshot(const RunConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(std::filesystem::path(out_dir) / "config.txt", std::ios::trunc);
    if (!out) throw Error("cannot write config snapshot in " + out_dir);
    out << cfg.serialize();
}

}  // namespace segalm
