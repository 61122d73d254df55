// Example file: "SEGA" magic, u16 version, one JSON header line, then
// fixed-width little-endian records.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "segalm/common.hpp"
#include "segalm/example.hpp"

namespace segalm {

inline constexpr char kExampleMagic[4] = {'S', 'E', 'G', 'A'};
inline constexpr std::uint16_t kExampleVersion = 1;

namespace detail {

template <typename T>
void put_le(std::string& buf, T v) {
    using U = std::make_unsigned_t<T>;
    U u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const char* p) {
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        u |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
    return static_cast<T>(u);
}

inline std::size_t record_size(int max_len) {
    return 13 + 11 * static_cast<std::size_t>(max_len);
}

}  // namespace detail

inline std::size_t write_examples(const std::vector<Example>& xs, const std::string& path,
                                  std::uint64_t vocab_hash, int max_len) {
    for (const auto& ex : xs)
        if (ex.max_len() != max_len) throw ShapeMismatch("example max_len differs from file max_len");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    out.write(kExampleMagic, 4);
    std::string v;
    detail::put_le<std::uint16_t>(v, kExampleVersion);
    out.write(v.data(), static_cast<std::streamsize>(v.size()));
    nlohmann::json header = {
        {"count", xs.size()}, {"max_len", max_len}, {"vocab_hash", to_hex(vocab_hash)}};
    std::string hline = header.dump();
    hline.push_back('\n');
    out.write(hline.data(), static_cast<std::streamsize>(hline.size()));

    std::string rec;
    rec.reserve(detail::record_size(max_len));
    for (const auto& ex : xs) {
        rec.clear();
        rec.push_back(static_cast<char>(static_cast<std::uint8_t>(ex.kind)));
        detail::put_le<std::int32_t>(rec, ex.class_label);
        detail::put_le<std::int32_t>(rec, ex.span_start);
        detail::put_le<std::int32_t>(rec, ex.span_end);
        for (auto id : ex.ids) detail::put_le<std::int32_t>(rec, id);
        for (auto x : ex.p) detail::put_le<std::int16_t>(rec, x);
        for (auto x : ex.s) detail::put_le<std::int16_t>(rec, x);
        for (auto x : ex.t) detail::put_le<std::int16_t>(rec, x);
        for (auto m : ex.attn_mask) rec.push_back(static_cast<char>(m));
        out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    }
    if (!out) throw Error("write failed: " + path);
    return xs.size();
}

struct ExampleFileHeader {
    std::uint64_t count = 0;
    int max_len = 0;
    std::string vocab_hash;
    std::uint64_t data_offset = 0;
};

inline ExampleFileHeader read_example_header(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kExampleMagic, 4) != 0)
        throw CorruptRecord(0);
    char vb[2];
    if (!in.read(vb, 2)) throw CorruptRecord(4);
    std::uint16_t version = detail::get_le<std::uint16_t>(vb);
    if (version != kExampleVersion)
        throw Error("unsupported example file version " + std::to_string(version));
    std::string hline;
    if (!std::getline(in, hline)) throw CorruptRecord(6);
    nlohmann::json header = nlohmann::json::parse(hline, nullptr, false);
    if (header.is_discarded() || !header.contains("count") || !header.contains("max_len") ||
        !header.contains("vocab_hash"))
        throw CorruptRecord(6);
    ExampleFileHeader h;
    h.count = header["count"].get<std::uint64_t>();
    h.max_len = header["max_len"].get<int>();
    h.vocab_hash = header["vocab_hash"].get<std::string>();
    h.data_offset = 6 + hline.size() + 1;
    if (h.max_len <= 0 || h.max_len > 4096) throw CorruptRecord(6);
    return h;
}

inline std::vector<Example> read_examples(const std::string& path, std::uint64_t vocab_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open example file: " + path);
    ExampleFileHeader h = read_example_header(in);
    if (h.vocab_hash != to_hex(vocab_hash)) throw VocabMismatch();

    const std::size_t rsize = detail::record_size(h.max_len);
    const std::size_t n = static_cast<std::size_t>(h.max_len);
    std::vector<Example> xs;
    xs.reserve(h.count);
    std::string rec(rsize, '\0');
    for (std::uint64_t r = 0; r < h.count; ++r) {
        std::uint64_t offset = h.data_offset + r * rsize;
        if (!in.read(rec.data(), static_cast<std::streamsize>(rsize))) throw CorruptRecord(offset);
        const char* c = rec.data();
        Example ex;
        std::uint8_t kind = static_cast<std::uint8_t>(*c++);
        if (kind > 3) throw CorruptRecord(offset);
        ex.kind = static_cast<ExampleKind>(kind);
        ex.class_label = detail::get_le<std::int32_t>(c); c += 4;
        ex.span_start = detail::get_le<std::int32_t>(c); c += 4;
        ex.span_end = detail::get_le<std::int32_t>(c); c += 4;
        ex.ids.resize(n);
        for (std::size_t i = 0; i < n; ++i) { ex.ids[i] = detail::get_le<std::int32_t>(c); c += 4; }
        auto read16 = [&](std::vector<std::int16_t>& dst) {
            dst.resize(n);
            for (std::size_t i = 0; i < n; ++i) { dst[i] = detail::get_le<std::int16_t>(c); c += 2; }
        };
        read16(ex.p);
        read16(ex.s);
        read16(ex.t);
        ex.attn_mask.resize(n);
        for (std::size_t i = 0; i < n; ++i) ex.attn_mask[i] = static_cast<std::uint8_t>(*c++);
        xs.push_back(std::move(ex));
    }
    // Trailing bytes mean the header count and the payload disagree.
    char extra;
    if (in.read(&extra, 1)) throw CorruptRecord(h.data_offset + h.count * rsize);
    return xs;
}

}  // namespace segalm
