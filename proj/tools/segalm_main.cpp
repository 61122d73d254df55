// segalm: operator entry point. Subcommands: segment, pretrain, finetune,
// gradcheck, probe, inspect.
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "segalm/checkpoint.hpp"
#include "segalm/config.hpp"
#include "segalm/corpus.hpp"
#include "segalm/example_io.hpp"
#include "segalm/gradcheck.hpp"
#include "segalm/probe.hpp"
#include "segalm/task_heads.hpp"
#include "segalm/trainer.hpp"

namespace {

using segalm::RunConfig;

// --config file first, explicit flags override.
struct ConfigCli {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;

    void bind(CLI::App* cmd, const std::string& flag, const std::string& key,
              const std::string& desc) {
        cmd->add_option_function<std::string>(
            flag, [this, key](const std::string& v) { overrides.emplace_back(key, v); }, desc);
    }

    void add_common(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "configuration file (key = value lines)");
        bind(cmd, "--scheme", "scheme", "position scheme: sega | global | global_ps");
        bind(cmd, "--encoder", "encoder", "encoder preset: toy | base | large");
        bind(cmd, "--seed", "seed", "run seed");
        bind(cmd, "--threads", "threads", "worker threads (capped by SEGALM_THREADS)");
        bind(cmd, "--max-len", "max_len", "packed sequence length");
        bind(cmd, "--vocab", "vocab", "vocabulary file");
        bind(cmd, "--out-dir", "out_dir", "run output directory");
        cmd->add_flag_function(
            "--deterministic",
            [this](std::int64_t) { overrides.emplace_back("deterministic", "true"); },
            "single-threaded reproducible mode");
    }

    RunConfig resolve() const {
        RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        cfg.validate();
        return cfg;
    }
};

segalm::Vocab load_vocab_checked(const RunConfig& cfg) {
    if (cfg.vocab.empty()) throw segalm::ConfigError("missing vocab path (--vocab or config)");
    return segalm::load_vocab(cfg.vocab);
}

segalm::AbbrevList load_abbrevs(const RunConfig& cfg) {
    if (!cfg.abbrev.empty()) return segalm::load_abbreviations(cfg.abbrev);
    // fall back to the list shipped next to the binary's data directory
    if (std::filesystem::exists("data/abbreviations.txt"))
        return segalm::load_abbreviations("data/abbreviations.txt");
    throw segalm::ConfigError("missing abbreviation list (--abbrev or data/abbreviations.txt)");
}

int cmd_segment(const ConfigCli& cli) {
    RunConfig cfg = cli.resolve();
    if (cfg.corpus.empty() || cfg.examples.empty())
        throw segalm::ConfigError("segment needs --corpus and --examples");
    auto vocab = load_vocab_checked(cfg);
    auto abbrevs = load_abbrevs(cfg);
    auto docs = segalm::read_corpus_documents(cfg.corpus);
    segalm::SegmentStats stats;
    segalm::TokenizerOptions topts;
    topts.lowercase = cfg.lowercase;
    auto examples = segalm::segment_corpus(docs, vocab, abbrevs, cfg.caps, cfg.max_len, topts, &stats);
    segalm::write_examples(examples, cfg.examples, vocab.hash(), cfg.max_len);

    nlohmann::json report = {{"documents", stats.documents},
                             {"paragraphs", stats.paragraphs},
                             {"sentences", stats.sentences},
                             {"tokens", stats.tokens},
                             {"examples", stats.examples},
                             {"clip_rate_paragraph", stats.clip_rate_paragraph()},
                             {"clip_rate_sentence", stats.clip_rate_sentence()},
                             {"clip_rate_token", stats.clip_rate_token()},
                             {"output", cfg.examples}};
    std::cout << report.dump(2) << "\n";
    if (examples.empty()) std::cerr << "warning: corpus produced no examples\n";
    return 0;
}

int cmd_pretrain(const ConfigCli& cli, const std::string& resume_dir) {
    RunConfig cfg = cli.resolve();
    if (cfg.examples.empty()) throw segalm::ConfigError("pretrain needs --examples");
    auto vocab = load_vocab_checked(cfg);
    auto examples = segalm::read_examples(cfg.examples, vocab.hash());

    segalm::write_config_snapshot(cfg, cfg.out_dir);
    segalm::PretrainConfig pc;
    pc.total_steps = cfg.total_steps;
    pc.batch_size = cfg.batch_size;
    pc.peak_lr = cfg.peak_lr;
    pc.weight_decay = cfg.weight_decay;
    pc.clip_norm = cfg.clip_norm;
    pc.seed = cfg.seed;
    pc.checkpoint_every = cfg.checkpoint_every;
    pc.threads = cfg.effective_threads();
    pc.masking = cfg.masking_policy();

    segalm::ModelParams<float> mp;
    segalm::TrainState<float> state;
    if (!resume_dir.empty()) {
        namespace fs = std::filesystem;
        mp = segalm::load_checkpoint<float>((fs::path(resume_dir) / "params.sgck").string(),
                                            vocab.hash());
        state = segalm::load_train_state<float>((fs::path(resume_dir) / "train_state.sgts").string(),
                                                mp);
        if (state.total_steps != cfg.total_steps)
            throw segalm::ConfigError("resume total_steps differs from config");
    } else {
        mp = segalm::alloc_model<float>(cfg.scheme_enum(), cfg.encoder_config(), vocab.size(),
                                        cfg.caps);
        segalm::init_model(mp, cfg.seed);
        state = segalm::make_train_state(mp, cfg.total_steps, cfg.peak_lr, cfg.seed);
        state.weight_decay = cfg.weight_decay;
        state.clip_norm = cfg.clip_norm;
    }

    auto result = segalm::pretrain(mp, state, examples, vocab, pc, cfg.out_dir);
    nlohmann::json summary = {{"steps_run", result.steps_run},
                              {"final_checkpoint", result.final_checkpoint_dir},
                              {"out_dir", cfg.out_dir}};
    if (!result.metrics.empty()) {
        summary["initial_loss"] = result.metrics.front().loss;
        summary["final_loss"] = result.metrics.back().loss;
        summary["final_masked_acc"] = result.metrics.back().masked_acc;
    }
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_finetune(const ConfigCli& cli) {
    RunConfig cfg = cli.resolve();
    if (cfg.checkpoint.empty() || cfg.train_data.empty())
        throw segalm::ConfigError("finetune needs --checkpoint and --train");
    auto vocab = load_vocab_checked(cfg);
    segalm::write_config_snapshot(cfg, cfg.out_dir);

    segalm::TaskType task = segalm::task_from_name(cfg.task);
    segalm::FinetuneConfig fc = segalm::FinetuneConfig::for_task(task);
    fc.lr = cfg.ft_lr;
    fc.batch = cfg.ft_batch;
    fc.epochs = cfg.ft_epochs;
    fc.num_labels = cfg.num_labels;
    fc.max_answer_len = cfg.max_answer_len;
    fc.seed = cfg.seed;
    fc.threads = cfg.effective_threads();
    fc.weight_decay = cfg.weight_decay;
    fc.clip_norm = cfg.clip_norm;

    std::optional<segalm::PositionScheme> expect;
    for (const auto& [k, v] : cli.overrides)
        if (k == "scheme") expect = segalm::scheme_from_name(v);

    auto report = segalm::finetune<float>(cfg.checkpoint, cfg.train_data, cfg.dev_data, task, fc,
                                          vocab, cfg.max_len, cfg.out_dir, expect);
    nlohmann::json out = {{"task", cfg.task},
                          {"steps", report.steps},
                          {"checkpoint", report.checkpoint_path}};
    for (const auto& [k, v] : report.metrics) out["metrics"][k] = v;
    std::ofstream mfile(std::filesystem::path(cfg.out_dir) / "metrics.json");
    mfile << out.dump(2) << "\n";
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_gradcheck(const ConfigCli& cli, double tolerance) {
    RunConfig cfg = cli.resolve();
    auto vocab = load_vocab_checked(cfg);
    auto report = segalm::gradient_check(cfg.scheme_enum(), cfg.encoder_config(), vocab, tolerance,
                                         cfg.seed);
    for (const auto& g : report.groups) {
        if (g.skipped)
            std::cout << "SKIP " << g.name << " (" << g.note << ")\n";
        else
            std::cout << (g.pass ? "PASS " : "FAIL ") << g.name << " max_rel_err=" << g.max_rel_err
                      << " coords=" << g.checked_coords << "\n";
    }
    std::cout << (report.all_pass ? "gradient check passed" : "gradient check FAILED")
              << " (tolerance " << tolerance << ")\n";
    return report.all_pass ? 0 : 1;
}

int cmd_probe(const ConfigCli& cli) {
    RunConfig cfg = cli.resolve();
    if (cfg.checkpoint.empty() || cfg.examples.empty())
        throw segalm::ConfigError("probe needs --checkpoint and --examples");
    auto vocab = load_vocab_checked(cfg);
    auto mp = segalm::load_checkpoint<float>(cfg.checkpoint, vocab.hash());
    auto examples = segalm::read_examples(cfg.examples, vocab.hash());
    auto report = segalm::probe_sentence_index(mp, examples, vocab, cfg.seed);
    nlohmann::json out = {{"scheme", segalm::scheme_name(mp.scheme)},
                          {"probe_accuracy", report.eval_accuracy},
                          {"train_accuracy", report.train_accuracy},
                          {"majority_baseline", report.majority_baseline},
                          {"classes", report.classes},
                          {"train_tokens", report.train_tokens},
                          {"eval_tokens", report.eval_tokens}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_inspect(const std::string& path, std::size_t limit) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw segalm::Error("cannot open: " + path);
    auto header = segalm::read_example_header(in);
    in.close();

    // header check done; reread ignoring the vocab hash (inspect is
    // format-level tooling)
    std::uint64_t hash = 0;
    std::sscanf(header.vocab_hash.c_str(), "%16lx", &hash);
    auto examples = segalm::read_examples(path, hash);
    std::size_t shown = 0;
    for (std::size_t i = 0; i < examples.size() && shown < limit; ++i, ++shown) {
        const auto& ex = examples[i];
        const int n = ex.length();
        auto take = [&](const auto& v) {
            return std::vector<int>(v.begin(), v.begin() + n);
        };
        nlohmann::json j = {{"index", i},
                            {"kind", segalm::kind_name(ex.kind)},
                            {"len", n},
                            {"ids", take(ex.ids)},
                            {"p", take(ex.p)},
                            {"s", take(ex.s)},
                            {"t", take(ex.t)},
                            {"attn_mask", take(ex.attn_mask)}};
        if (ex.class_label >= 0) j["class_label"] = ex.class_label;
        if (ex.span_start >= 0) j["span"] = {ex.span_start, ex.span_end};
        std::cout << j.dump() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"segment-aware masked language model toolkit"};
    app.require_subcommand(1);

    ConfigCli seg_cli, pre_cli, ft_cli, gc_cli, probe_cli;

    auto* seg = app.add_subcommand("segment", "corpus -> packed example file");
    seg_cli.add_common(seg);
    seg_cli.bind(seg, "--corpus", "corpus", "corpus file or directory");
    seg_cli.bind(seg, "--examples", "examples", "output example file");
    seg_cli.bind(seg, "--abbrev", "abbrev", "abbreviation stop-list");

    auto* pre = app.add_subcommand("pretrain", "masked-LM pretraining");
    pre_cli.add_common(pre);
    pre_cli.bind(pre, "--examples", "examples", "packed example file");
    pre_cli.bind(pre, "--total-steps", "total_steps", "optimizer steps");
    pre_cli.bind(pre, "--batch-size", "batch_size", "sequences per step");
    pre_cli.bind(pre, "--peak-lr", "peak_lr", "peak learning rate");
    pre_cli.bind(pre, "--checkpoint-every", "checkpoint_every", "checkpoint interval");
    pre_cli.bind(pre, "--dropout", "dropout", "dropout rate");
    std::string resume_dir;
    pre->add_option("--resume", resume_dir, "checkpoint directory to resume from");

    auto* ft = app.add_subcommand("finetune", "task fine-tuning from a checkpoint");
    ft_cli.add_common(ft);
    ft_cli.bind(ft, "--checkpoint", "checkpoint", "pretrained checkpoint (.sgck)");
    ft_cli.bind(ft, "--train", "train_data", "training task file (JSONL)");
    ft_cli.bind(ft, "--dev", "dev_data", "dev task file (JSONL)");
    ft_cli.bind(ft, "--task", "task", "classify | regress | span");
    ft_cli.bind(ft, "--num-labels", "num_labels", "classification label count");
    ft_cli.bind(ft, "--ft-lr", "ft_lr", "fine-tune learning rate");
    ft_cli.bind(ft, "--ft-batch", "ft_batch", "fine-tune batch size");
    ft_cli.bind(ft, "--ft-epochs", "ft_epochs", "fine-tune epochs");
    ft_cli.bind(ft, "--max-answer-len", "max_answer_len", "span decode length limit");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc_cli.add_common(gc);
    double tolerance = 1e-4;
    gc->add_option("--tolerance", tolerance, "max relative error");

    auto* pr = app.add_subcommand("probe", "sentence-index linear probe on a checkpoint");
    probe_cli.add_common(pr);
    probe_cli.bind(pr, "--checkpoint", "checkpoint", "model checkpoint (.sgck)");
    probe_cli.bind(pr, "--examples", "examples", "packed example file");

    auto* ins = app.add_subcommand("inspect", "dump an example file as JSON lines");
    std::string inspect_path;
    std::size_t inspect_limit = 16;
    ins->add_option("file", inspect_path, "example file")->required();
    ins->add_option("--limit", inspect_limit, "records to dump");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    try {
        if (seg->parsed()) return cmd_segment(seg_cli);
        if (pre->parsed()) return cmd_pretrain(pre_cli, resume_dir);
        if (ft->parsed()) return cmd_finetune(ft_cli);
        if (gc->parsed()) return cmd_gradcheck(gc_cli, tolerance);
        if (pr->parsed()) return cmd_probe(probe_cli);
        if (ins->parsed()) return cmd_inspect(inspect_path, inspect_limit);
    } catch (const segalm::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
