// Fine-tuning: classification and span-extraction heads, task-file loading,
// the training loop, and span decoding.
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "segalm/adam.hpp"
#include "segalm/checkpoint.hpp"
#include "segalm/example_builder.hpp"
#include "segalm/metrics.hpp"
#include "segalm/model.hpp"
#include "segalm/trainer.hpp"
#include "segalm/wordpiece.hpp"

namespace segalm {

enum class TaskType { Classify, Regress, Span };

inline const char* task_name(TaskType t) {
    switch (t) {
        case TaskType::Classify: return "classify";
        case TaskType::Regress: return "regress";
        case TaskType::Span: return "span";
    }
    return "?";
}

inline TaskType task_from_name(const std::string& s) {
    if (s == "classify") return TaskType::Classify;
    if (s == "regress") return TaskType::Regress;
    if (s == "span") return TaskType::Span;
    throw ConfigError("unknown task: " + s + " (want classify|regress|span)");
}

struct FinetuneConfig {
    double lr = 3e-5;
    int batch = 256;
    int epochs = 3;
    int num_labels = 2;
    int max_answer_len = 30;
    std::uint64_t seed = 42;
    int threads = 1;
    double weight_decay = 0.01;
    double clip_norm = 1.0;

    // §-style defaults: classification 3e-5/256/3, span 3e-5/128/4.
    static FinetuneConfig for_task(TaskType t) {
        FinetuneConfig c;
        if (t == TaskType::Span) {
            c.batch = 128;
            c.epochs = 4;
        }
        return c;
    }

    void validate() const {
        if (lr <= 0 || batch <= 0 || epochs <= 0) throw ConfigError("finetune lr/batch/epochs must be positive");
        if (num_labels < 1) throw ConfigError("num_labels must be >= 1");
        if (max_answer_len < 1) throw ConfigError("max_answer_len must be >= 1");
    }
};

// The recorded hyper-parameter grid for low-resource sweeps.
struct FinetuneGrid {
    std::vector<int> batch_sizes = {16, 24, 32};
    std::vector<double> learning_rates = {2e-5, 3e-5, 5e-5};
    int min_epochs = 3;
    int max_epochs = 10;

    std::vector<FinetuneConfig> expand(const FinetuneConfig& base) const {
        std::vector<FinetuneConfig> out;
        for (int b : batch_sizes)
            for (double lr : learning_rates)
                for (int e = min_epochs; e <= max_epochs; ++e) {
                    FinetuneConfig c = base;
                    c.batch = b;
                    c.lr = lr;
                    c.epochs = e;
                    out.push_back(c);
                }
        return out;
    }
};

// Softmax label distribution from the [CLS] pooler, or the raw scalar for
// regression heads.
template <typename S>
Vec<S> classify(const Mat<S>& final_hidden, const ModelParams<S>& mp) {
    Vec<S> logits = classifier_forward(final_hidden, mp);
    if (logits.size() == 1) return logits;  // regression: raw scalar
    return softmax(logits);
}

// Start/end distributions over unmasked context positions.
template <typename S>
struct SpanDistributions {
    std::vector<int> positions;
    Vec<S> start;
    Vec<S> end;
};

template <typename S>
SpanDistributions<S> extract_span(const Mat<S>& final_hidden, const ModelParams<S>& mp,
                                  const Example& ex, const Vocab& vocab) {
    auto candidates = span_candidates(ex, vocab);
    auto lg = span_head_forward(final_hidden, candidates, mp);
    SpanDistributions<S> out;
    out.positions = lg.positions;
    out.start = softmax(lg.start);
    out.end = softmax(lg.end);
    return out;
}

// Argmax over candidate pairs (s, e) of start[s] + end[e] subject to
// s <= e <= s + max_answer_len (positions in the packed sequence).
template <typename S>
std::pair<int, int> decode_span(const SpanDistributions<S>& dist, int max_answer_len) {
    const std::size_t m = dist.positions.size();
    if (m == 0) throw NoContextPositions();
    double best = -1.0;
    std::pair<int, int> arg{dist.positions[0], dist.positions[0]};
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i; j < m; ++j) {
            const int s_pos = dist.positions[i];
            const int e_pos = dist.positions[j];
            if (e_pos - s_pos > max_answer_len) break;
            const double score =
                static_cast<double>(dist.start(static_cast<Eigen::Index>(i))) +
                static_cast<double>(dist.end(static_cast<Eigen::Index>(j)));
            if (score > best) {
                best = score;
                arg = {s_pos, e_pos};
            }
        }
    }
    return arg;
}

// ---------------------------------------------------------------------------
// Task files: JSON lines.
//   classification: {"text_a": ..., "text_b"?: ..., "label": int-or-float}
//   span: {"question":..., "context_paragraphs": [[sentence,...],...],
//          "answer_text":..., "answer_char_start": int}
// ---------------------------------------------------------------------------

struct ClassifyInstance {
    std::string text_a;
    std::string text_b;  // empty for single-sentence tasks
    double label = 0.0;
};

struct SpanInstance {
    std::string question;
    std::vector<std::vector<std::string>> context_paragraphs;
    std::string answer_text;
    int answer_char_start = -1;
};

inline std::vector<ClassifyInstance> load_classify_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open task file: " + path);
    std::vector<ClassifyInstance> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("text_a") || !j.contains("label"))
            throw Error(path + ":" + std::to_string(line_no) + ": bad classification record");
        ClassifyInstance inst;
        inst.text_a = j["text_a"].get<std::string>();
        if (j.contains("text_b") && !j["text_b"].is_null()) inst.text_b = j["text_b"].get<std::string>();
        inst.label = j["label"].is_string() ? std::stod(j["label"].get<std::string>())
                                            : j["label"].get<double>();
        out.push_back(std::move(inst));
    }
    return out;
}

inline std::vector<SpanInstance> load_span_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open task file: " + path);
    std::vector<SpanInstance> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("question") || !j.contains("context_paragraphs"))
            throw Error(path + ":" + std::to_string(line_no) + ": bad span record");
        SpanInstance inst;
        inst.question = j["question"].get<std::string>();
        for (const auto& para : j["context_paragraphs"]) {
            std::vector<std::string> sentences;
            for (const auto& s : para) sentences.push_back(s.get<std::string>());
            inst.context_paragraphs.push_back(std::move(sentences));
        }
        if (j.contains("answer_text")) inst.answer_text = j["answer_text"].get<std::string>();
        if (j.contains("answer_char_start")) inst.answer_char_start = j["answer_char_start"].get<int>();
        out.push_back(std::move(inst));
    }
    return out;
}

// In-memory fine-tuning datasets. Span examples carry, per packed position,
// the character span in the canonical context string (sentences joined with
// single spaces) so predictions can be read back as text.
struct ClassifyDataset {
    std::vector<Example> examples;
    std::vector<double> targets;  // class id or regression value
};

struct SpanTaskExample {
    Example example;
    std::vector<std::pair<int, int>> char_spans;  // per packed position; (-1,-1) off-context
    std::string context_text;
    std::string gold_answer;
};

struct SpanDataset {
    std::vector<SpanTaskExample> examples;
    std::size_t skipped_out_of_window = 0;
};

inline ClassifyDataset build_classify_dataset(const std::vector<ClassifyInstance>& instances,
                                              const Vocab& vocab, int max_len,
                                              const SegmentCaps& caps = {},
                                              const TokenizerOptions& topts = {}) {
    ClassifyDataset ds;
    for (const auto& inst : instances) {
        auto a = tokenize(inst.text_a, vocab, topts);
        Example ex = inst.text_b.empty()
                         ? build_single(a, vocab, max_len, caps)
                         : build_pair(a, tokenize(inst.text_b, vocab, topts), vocab, max_len, caps);
        ex.class_label = static_cast<std::int32_t>(inst.label);
        ds.examples.push_back(std::move(ex));
        ds.targets.push_back(inst.label);
    }
    return ds;
}

inline SpanDataset build_span_dataset(const std::vector<SpanInstance>& instances, const Vocab& vocab,
                                      int max_len, const SegmentCaps& caps = {},
                                      const TokenizerOptions& topts = {}) {
    SpanDataset ds;
    for (const auto& inst : instances) {
        auto question = tokenize(inst.question, vocab, topts);
        if (question.empty()) throw EmptyQuestion();

        SpanContext ctx;
        std::string context_text;
        std::vector<std::pair<int, int>> flat_spans;  // per flattened context token
        for (const auto& para : inst.context_paragraphs) {
            std::vector<std::vector<SubToken>> sents;
            for (const auto& sent : para) {
                if (!context_text.empty()) context_text.push_back(' ');
                const int base = static_cast<int>(context_text.size());
                context_text += sent;
                auto full = tokenize_full(sent, vocab, topts);
                if (full.tokens.empty()) continue;
                for (std::size_t t = 0; t < full.tokens.size(); ++t) {
                    const Word& w = full.words[static_cast<std::size_t>(full.word_of[t])];
                    flat_spans.push_back({base + static_cast<int>(w.byte_begin),
                                          base + static_cast<int>(w.byte_end)});
                }
                sents.push_back(std::move(full.tokens));
            }
            if (!sents.empty()) ctx.push_back(std::move(sents));
        }
        if (ctx.empty()) continue;

        int ans_begin = -1, ans_end = -1;
        if (inst.answer_char_start >= 0 && !inst.answer_text.empty()) {
            const int a0 = inst.answer_char_start;
            const int a1 = a0 + static_cast<int>(inst.answer_text.size());
            for (std::size_t t = 0; t < flat_spans.size(); ++t) {
                if (flat_spans[t].second > a0 && flat_spans[t].first < a1) {
                    if (ans_begin < 0) ans_begin = static_cast<int>(t);
                    ans_end = static_cast<int>(t);
                }
            }
            if (ans_begin < 0) {
                ++ds.skipped_out_of_window;
                continue;
            }
        }

        SpanTaskExample out;
        try {
            out.example = build_span(question, ctx, vocab, max_len, caps, ans_begin, ans_end);
        } catch (const AnswerOutOfWindow&) {
            ++ds.skipped_out_of_window;
            continue;
        }
        out.context_text = context_text;
        out.gold_answer = inst.answer_text;
        out.char_spans.assign(static_cast<std::size_t>(max_len), {-1, -1});
        // map packed context positions back to canonical characters
        const auto candidates = span_candidates(out.example, vocab);
        for (std::size_t i = 0; i < candidates.size() && i < flat_spans.size(); ++i)
            out.char_spans[static_cast<std::size_t>(candidates[i])] = flat_spans[i];
        ds.examples.push_back(std::move(out));
    }
    return ds;
}

struct FinetuneReport {
    std::map<std::string, double> metrics;
    std::string checkpoint_path;
    std::uint64_t steps = 0;
};

namespace detail {

template <typename S>
double finetune_batch_step(ModelParams<S>& mp, TrainState<S>& state,
                           const std::vector<const Example*>& batch,
                           const std::vector<double>& targets, TaskType task,
                           std::vector<ModelParams<S>>& buffers, ModelParams<S>& grads,
                           const FinetuneConfig& cfg, const Vocab& vocab, std::uint64_t step_index) {
    const S inv_b = S(1) / static_cast<S>(batch.size());
    std::vector<double> losses(batch.size(), 0.0);

    parallel_for(batch.size(), cfg.threads, [&](std::size_t i) {
        ModelParams<S>& g = buffers[i];
        const Example& ex = *batch[i];
        Rng drop_rng = derive_rng(cfg.seed, stream::kDropout, step_index * 4096 + i);
        EmbedOptions eopt;
        eopt.training = true;
        eopt.dropout = mp.config.dropout;
        EmbedCache<S> ec;
        Mat<S> x = embed(ex, mp.embedding, mp.scheme, eopt, &ec, &drop_rng);
        EncoderCache<S> enc;
        EncoderOptions enopt;
        enopt.training = true;
        auto states = encoder_forward(x, ex.attn_mask, mp.layers, mp.config, enopt, &enc, &drop_rng);
        Mat<S> dfinal = Mat<S>::Zero(states.back().rows(), states.back().cols());

        if (task == TaskType::Span) {
            auto candidates = span_candidates(ex, vocab);
            auto lg = span_head_forward(states.back(), candidates, mp);
            int si = -1, ei = -1;
            for (std::size_t c = 0; c < candidates.size(); ++c) {
                if (candidates[c] == ex.span_start) si = static_cast<int>(c);
                if (candidates[c] == ex.span_end) ei = static_cast<int>(c);
            }
            if (si < 0 || ei < 0) throw AnswerOutOfWindow();
            Mat<S> sm = lg.start, em = lg.end;
            auto ce_s = cross_entropy_columns(sm, {si}, true);
            auto ce_e = cross_entropy_columns(em, {ei}, true);
            losses[i] = 0.5 * static_cast<double>(ce_s.loss_sum + ce_e.loss_sum);
            Vec<S> ds = ce_s.dlogits.col(0) * (S(0.5) * inv_b);
            Vec<S> de = ce_e.dlogits.col(0) * (S(0.5) * inv_b);
            span_head_backward(ds, de, states.back(), lg, mp, g, dfinal);
        } else {
            PoolerCache<S> pc;
            Vec<S> logits = classifier_forward(states.back(), mp, &pc);
            if (task == TaskType::Regress) {
                const S pred = logits(0);
                const S err = pred - static_cast<S>(targets[i]);
                losses[i] = static_cast<double>(err * err);
                Vec<S> dlogits(1);
                dlogits(0) = S(2) * err * inv_b;
                classifier_backward(dlogits, mp, pc, g, dfinal);
            } else {
                Mat<S> lm = logits;
                auto ce = cross_entropy_columns(lm, {static_cast<int>(targets[i])}, true);
                losses[i] = static_cast<double>(ce.loss_sum);
                Vec<S> dlogits = ce.dlogits.col(0) * inv_b;
                classifier_backward(dlogits, mp, pc, g, dfinal);
            }
        }
        Mat<S> dx = encoder_backward(dfinal, mp.layers, mp.config, enc, g.layers);
        embed_backward(ex, dx, mp.embedding, mp.scheme, ec, g.embedding);
    });

    auto dst = grads.manifest();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto src = buffers[i].manifest();
        for (std::size_t t = 0; t < dst.size(); ++t) {
            Eigen::Map<Mat<S>> d(dst[t].data, dst[t].rows, dst[t].cols);
            Eigen::Map<const Mat<S>> s(src[t].data, src[t].rows, src[t].cols);
            d += s;
        }
    }
    clip_global_norm(grads, cfg.clip_norm);
    adam_step(mp, grads, state);

    double total = 0;
    for (double l : losses) total += l;
    return total / static_cast<double>(batch.size());
}

template <typename S>
void run_finetune_epochs(ModelParams<S>& mp, const std::vector<const Example*>& dataset,
                         const std::vector<double>& targets, TaskType task,
                         const FinetuneConfig& cfg, const Vocab& vocab, std::uint64_t* steps_out) {
    const std::size_t n = dataset.size();
    if (n == 0) throw Error("empty fine-tuning dataset");
    const int batch = std::min<int>(cfg.batch, static_cast<int>(n));
    const std::uint64_t steps_per_epoch = (n + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch);
    const std::uint64_t total = steps_per_epoch * static_cast<std::uint64_t>(cfg.epochs);

    TrainState<S> state = make_train_state(mp, total, cfg.lr, cfg.seed);
    state.weight_decay = cfg.weight_decay;
    state.clip_norm = cfg.clip_norm;

    std::vector<ModelParams<S>> buffers;
    for (int i = 0; i < batch; ++i) buffers.push_back(zeros_like(mp));
    ModelParams<S> grads = zeros_like(mp);

    std::uint64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng = derive_rng(cfg.seed, stream::kShuffle, static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t pos = 0; pos < n; pos += static_cast<std::size_t>(batch)) {
            std::vector<const Example*> bx;
            std::vector<double> bt;
            for (std::size_t i = pos; i < std::min(n, pos + static_cast<std::size_t>(batch)); ++i) {
                bx.push_back(dataset[order[i]]);
                bt.push_back(targets[order[i]]);
            }
            while (static_cast<int>(bx.size()) < batch && !bx.empty()) {
                bx.push_back(bx.back());  // pad the tail batch by repetition
                bt.push_back(bt.back());
            }
            for (auto& b : buffers) {
                auto m = b.manifest();
                for (auto& t : m) Eigen::Map<Mat<S>>(t.data, t.rows, t.cols).setZero();
            }
            {
                auto m = grads.manifest();
                for (auto& t : m) Eigen::Map<Mat<S>>(t.data, t.rows, t.cols).setZero();
            }
            finetune_batch_step(mp, state, bx, bt, task, buffers, grads, cfg, vocab, ++step);
        }
    }
    if (steps_out) *steps_out = step;
}

}  // namespace detail

// Dev-set evaluation for classification/regression.
template <typename S>
std::map<std::string, double> evaluate_classify(ModelParams<S>& mp, const ClassifyDataset& dev,
                                                TaskType task) {
    std::map<std::string, double> out;
    if (dev.examples.empty()) throw Error("empty evaluation set");
    if (task == TaskType::Regress) {
        std::vector<double> preds, golds;
        for (std::size_t i = 0; i < dev.examples.size(); ++i) {
            auto states = model_forward_states(dev.examples[i], mp);
            preds.push_back(static_cast<double>(classify(states.back(), mp)(0)));
            golds.push_back(dev.targets[i]);
        }
        out["spearman"] = spearman_corr(preds, golds);
        out["pearson"] = pearson_corr(preds, golds);
        return out;
    }
    std::vector<int> preds, golds;
    for (std::size_t i = 0; i < dev.examples.size(); ++i) {
        auto states = model_forward_states(dev.examples[i], mp);
        Vec<S> dist = classify(states.back(), mp);
        Eigen::Index best;
        dist.maxCoeff(&best);
        preds.push_back(static_cast<int>(best));
        golds.push_back(static_cast<int>(dev.targets[i]));
    }
    out["accuracy"] = accuracy(preds, golds);
    bool binary = true;
    for (int g : golds)
        if (g != 0 && g != 1) binary = false;
    if (binary) {
        out["f1"] = binary_f1(preds, golds);
        out["matthews"] = matthews_corr(preds, golds);
    }
    return out;
}

template <typename S>
std::map<std::string, double> evaluate_span(ModelParams<S>& mp, const SpanDataset& dev,
                                            const Vocab& vocab, int max_answer_len) {
    if (dev.examples.empty()) throw Error("empty evaluation set");
    double em = 0, f1 = 0;
    for (const auto& ex : dev.examples) {
        auto states = model_forward_states(ex.example, mp);
        auto dist = extract_span(states.back(), mp, ex.example, vocab);
        auto [s_pos, e_pos] = decode_span(dist, max_answer_len);
        std::string pred;
        const auto& s_span = ex.char_spans[static_cast<std::size_t>(s_pos)];
        const auto& e_span = ex.char_spans[static_cast<std::size_t>(e_pos)];
        if (s_span.first >= 0 && e_span.second >= s_span.first)
            pred = ex.context_text.substr(static_cast<std::size_t>(s_span.first),
                                          static_cast<std::size_t>(e_span.second - s_span.first));
        em += span_exact_match(pred, ex.gold_answer);
        f1 += span_f1(pred, ex.gold_answer);
    }
    const double n = static_cast<double>(dev.examples.size());
    return {{"em", em / n}, {"f1", f1 / n}};
}

// Full fine-tuning entry point: load checkpoint, attach + init the task
// head, train, evaluate, save.
template <typename S>
FinetuneReport finetune(const std::string& checkpoint_path, const std::string& train_path,
                        const std::string& dev_path, TaskType task, FinetuneConfig cfg,
                        const Vocab& vocab, int max_len, const std::string& out_dir,
                        std::optional<PositionScheme> expect_scheme = {}) {
    cfg.validate();
    auto mp = load_checkpoint<S>(checkpoint_path, vocab.hash());
    if (expect_scheme && mp.scheme != *expect_scheme)
        throw SchemeMismatch(std::string("checkpoint is ") + scheme_name(mp.scheme) + ", requested " +
                             scheme_name(*expect_scheme));

    FinetuneReport report;
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    if (task == TaskType::Span) {
        attach_span_head(mp);
        init_tensors_matching(mp, cfg.seed, "span.");
        auto train = build_span_dataset(load_span_jsonl(train_path), vocab, max_len, mp.caps);
        if (train.examples.empty()) throw Error("no usable span training examples");
        std::vector<const Example*> ptrs;
        std::vector<double> dummy;
        for (const auto& e : train.examples) {
            ptrs.push_back(&e.example);
            dummy.push_back(0.0);
        }
        detail::run_finetune_epochs(mp, ptrs, dummy, task, cfg, vocab, &report.steps);
        auto dev = dev_path.empty() ? std::move(train)
                                    : build_span_dataset(load_span_jsonl(dev_path), vocab, max_len, mp.caps);
        report.metrics = evaluate_span(mp, dev, vocab, cfg.max_answer_len);
        report.metrics["skipped_out_of_window"] = static_cast<double>(dev.skipped_out_of_window);
    } else {
        const int width = task == TaskType::Regress ? 1 : cfg.num_labels;
        attach_classifier(mp, width);
        init_tensors_matching(mp, cfg.seed, "cls.");
        auto train = build_classify_dataset(load_classify_jsonl(train_path), vocab, max_len, mp.caps);
        if (train.examples.empty()) throw Error("no classification training examples");
        std::vector<const Example*> ptrs;
        for (const auto& e : train.examples) ptrs.push_back(&e);
        detail::run_finetune_epochs(mp, ptrs, train.targets, task, cfg, vocab, &report.steps);
        auto dev = dev_path.empty() ? std::move(train)
                                    : build_classify_dataset(load_classify_jsonl(dev_path), vocab,
                                                             max_len, mp.caps);
        report.metrics = evaluate_classify(mp, dev, task);
    }

    report.checkpoint_path = (fs::path(out_dir) / "finetuned.sgck").string();
    save_checkpoint(report.checkpoint_path, mp, vocab.hash());
    return report;
}

}  // namespace segalm
