// Shared error types, RNG derivation, and small utilities.
#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace segalm {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingSpecialToken : Error {
    explicit MissingSpecialToken(const std::string& name)
        : Error("vocab is missing special token " + name), token(name) {}
    std::string token;
};

struct DuplicateToken : Error {
    DuplicateToken(const std::string& tok, std::size_t line_no)
        : Error("duplicate vocab entry \"" + tok + "\" at line " + std::to_string(line_no)),
          line(line_no) {}
    std::size_t line;
};

struct EmptyVocab : Error {
    EmptyVocab() : Error("vocab file contains no entries") {}
};

struct UnknownSurface : Error {
    explicit UnknownSurface(const std::string& surface)
        : Error("subtoken surface not in vocab: \"" + surface + "\"") {}
};

struct EmptySequence : Error {
    explicit EmptySequence(const std::string& which) : Error("empty sequence: " + which) {}
};

struct EmptyQuestion : Error {
    EmptyQuestion() : Error("span example requires a non-empty question") {}
};

struct AnswerOutOfWindow : Error {
    AnswerOutOfWindow() : Error("gold answer span falls outside the packed window") {}
};

struct VocabMismatch : Error {
    VocabMismatch() : Error("file was written with a different vocab (hash mismatch)") {}
};

struct CorruptRecord : Error {
    explicit CorruptRecord(std::uint64_t byte_offset)
        : Error("corrupt or truncated record at byte offset " + std::to_string(byte_offset)),
          offset(byte_offset) {}
    std::uint64_t offset;
};

struct IndexOutOfTable : Error {
    explicit IndexOutOfTable(const std::string& what) : Error("index out of table: " + what) {}
};

struct AllMasked : Error {
    AllMasked() : Error("attention mask leaves no visible key") {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& what) : Error("shape mismatch: " + what) {}
};

struct NoEligiblePositions : Error {
    NoEligiblePositions() : Error("example has no maskable positions") {}
};

struct NoLabels : Error {
    NoLabels() : Error("no labeled positions for MLM loss") {}
};

struct NonFiniteGradient : Error {
    explicit NonFiniteGradient(const std::string& tensor)
        : Error("non-finite gradient in tensor " + tensor) {}
};

struct NoContextPositions : Error {
    NoContextPositions() : Error("span example has no context positions") {}
};

struct SchemeMismatch : Error {
    explicit SchemeMismatch(const std::string& what) : Error("position scheme mismatch: " + what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(what) {}
};

using Rng = std::mt19937_64;

// SplitMix64 step; used to derive independent substreams from (seed, tag).
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Stateless substream derivation: the rng for (seed, stream, step) never depends
// on how many draws earlier steps consumed, which is what makes checkpoint
// resume bit-exact.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t step = 0) {
    return Rng(mix64(mix64(seed ^ 0xA02BDBF7BB3C0A7ull) ^ mix64(stream) ^ mix64(step + 1)));
}

namespace stream {
inline constexpr std::uint64_t kMasking = 1;
inline constexpr std::uint64_t kDropout = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kShuffle = 4;
inline constexpr std::uint64_t kProbe = 5;
}  // namespace stream

inline int env_thread_cap() {
    if (const char* v = std::getenv("SEGALM_THREADS")) {
        int n = std::atoi(v);
        if (n > 0) return n;
    }
    return 0;  // unset
}

// Resolve the worker count: explicit requests are capped by SEGALM_THREADS.
inline int resolve_threads(int requested) {
    int cap = env_thread_cap();
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    int n = requested > 0 ? requested : 1;
    if (cap > 0 && n > cap) n = cap;
    return n < 1 ? 1 : n;
}

// Runs fn(i) for i in [0, count). Results must not depend on the partition:
// callers write to disjoint slots and reduce in index order afterwards.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
    if (count == 0) return;
    threads = resolve_threads(threads);
    if (threads <= 1 || count == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::size_t nworkers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
    std::vector<std::thread> pool;
    pool.reserve(nworkers);
    for (std::size_t w = 0; w < nworkers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += nworkers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

// FNV-1a over bytes; vocab and file headers use the hex form.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xCBF29CE484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

}  // namespace segalm
