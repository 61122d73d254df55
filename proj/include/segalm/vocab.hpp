// Subword vocabulary: newline-delimited file, id = zero-based line number.
#pragma once

#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "segalm/common.hpp"

namespace segalm {

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kMaskToken = "[MASK]";

struct SubToken {
    int id = -1;
    std::string surface;
    bool is_continuation = false;  // surface begins with "##"
};

class Vocab {
public:
    Vocab() = default;

    Vocab(std::vector<std::string> entries_in) : entries_(std::move(entries_in)) {
        if (entries_.empty()) throw EmptyVocab();
        id_of_.reserve(entries_.size());
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            auto [it, inserted] = id_of_.emplace(entries_[i], static_cast<int>(i));
            if (!inserted) throw DuplicateToken(entries_[i], i + 1);
        }
        pad_id_ = require_special(kPadToken);
        unk_id_ = require_special(kUnkToken);
        cls_id_ = require_special(kClsToken);
        sep_id_ = require_special(kSepToken);
        mask_id_ = require_special(kMaskToken);
    }

    int size() const { return static_cast<int>(entries_.size()); }

    // -1 when the surface is not in the vocab.
    int find(std::string_view surface) const {
        auto it = id_of_.find(std::string(surface));
        return it == id_of_.end() ? -1 : it->second;
    }

    const std::string& surface_of(int id) const { return entries_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& entries() const { return entries_; }

    int pad_id() const { return pad_id_; }
    int unk_id() const { return unk_id_; }
    int cls_id() const { return cls_id_; }
    int sep_id() const { return sep_id_; }
    int mask_id() const { return mask_id_; }

    bool is_special(int id) const {
        return id == pad_id_ || id == unk_id_ || id == cls_id_ || id == sep_id_ || id == mask_id_;
    }

    // FNV-1a over entries joined with '\n'; stored in file headers so a reader
    // can refuse data built against a different vocab.
    std::uint64_t hash() const {
        std::uint64_t h = 0xCBF29CE484222325ull;
        for (const auto& e : entries_) {
            h = fnv1a64(e.data(), e.size(), h);
            h = fnv1a64("\n", 1, h);
        }
        return h;
    }
    std::string hash_hex() const { return to_hex(hash()); }

private:
    int require_special(std::string_view name) const {
        int id = find(name);
        if (id < 0) throw MissingSpecialToken(std::string(name));
        return id;
    }

    std::vector<std::string> entries_;
    std::unordered_map<std::string, int> id_of_;
    int pad_id_ = -1, unk_id_ = -1, cls_id_ = -1, sep_id_ = -1, mask_id_ = -1;
};

inline Vocab load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open vocab file: " + path);
    std::vector<std::string> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        entries.push_back(line);
    }
    // A trailing newline is not an entry.
    if (!entries.empty() && entries.back().empty()) entries.pop_back();
    if (entries.empty()) throw EmptyVocab();
    return Vocab(std::move(entries));
}

inline std::vector<int> ids_of(const std::vector<SubToken>& tokens, const Vocab& vocab) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) {
        int id = vocab.find(t.surface);
        if (id < 0 || id != t.id) throw UnknownSurface(t.surface);
        ids.push_back(id);
    }
    return ids;
}

}  // namespace segalm
