// Corpus reading and the segment->index->pack pipeline with clip-rate
// statistics.
#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "segalm/example_builder.hpp"
#include "segalm/segmenter.hpp"

namespace segalm {

inline constexpr const char* kDocSeparator = "===DOC===";

// A corpus is either one file with ===DOC=== separator lines, or a
// directory of files (one document each, sorted by name).
inline std::vector<std::string> read_corpus_documents(const std::string& path) {
    namespace fs = std::filesystem;
    std::vector<std::string> docs;
    auto read_file = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw Error("cannot open corpus file: " + p.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) docs.push_back(read_file(f));
        return docs;
    }
    std::string all = read_file(path);
    std::string cur;
    std::size_t pos = 0;
    auto flush = [&] {
        if (cur.find_first_not_of(" \t\r\n") != std::string::npos) docs.push_back(cur);
        cur.clear();
    };
    while (pos <= all.size()) {
        std::size_t nl = all.find('\n', pos);
        std::string line = all.substr(pos, (nl == std::string::npos ? all.size() : nl) - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == kDocSeparator) {
            flush();
        } else {
            cur += line;
            cur.push_back('\n');
        }
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    flush();
    return docs;
}

struct SegmentStats {
    std::size_t documents = 0;
    std::size_t paragraphs = 0;
    std::size_t sentences = 0;
    std::size_t tokens = 0;
    std::size_t examples = 0;
    ClipStats clips;

    double clip_rate_paragraph() const {
        return tokens ? static_cast<double>(clips.clipped_paragraph) / static_cast<double>(tokens) : 0.0;
    }
    double clip_rate_sentence() const {
        return tokens ? static_cast<double>(clips.clipped_sentence) / static_cast<double>(tokens) : 0.0;
    }
    double clip_rate_token() const {
        return tokens ? static_cast<double>(clips.clipped_token) / static_cast<double>(tokens) : 0.0;
    }
};

// Full preprocessing: raw documents -> packed pretraining examples.
inline std::vector<Example> segment_corpus(const std::vector<std::string>& documents,
                                           const Vocab& vocab, const AbbrevList& abbrevs,
                                           const SegmentCaps& caps, int max_len,
                                           const TokenizerOptions& topts = {},
                                           SegmentStats* stats = nullptr) {
    std::vector<Example> out;
    for (const auto& raw : documents) {
        Document doc = build_document(raw, vocab, abbrevs, topts);
        if (doc.paragraphs.empty()) continue;
        ClipStats clip;
        auto indexed = assign_indices(doc, caps, &clip);
        auto packed = pack_pretraining(indexed, max_len, vocab, caps);
        if (stats) {
            ++stats->documents;
            stats->paragraphs += doc.paragraphs.size();
            for (const auto& para : doc.paragraphs) stats->sentences += para.size();
            stats->tokens += indexed.size();
            stats->examples += packed.size();
            stats->clips.clipped_paragraph += clip.clipped_paragraph;
            stats->clips.clipped_sentence += clip.clipped_sentence;
            stats->clips.clipped_token += clip.clipped_token;
        }
        for (auto& ex : packed) out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace segalm
