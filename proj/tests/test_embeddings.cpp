#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "segalm/embeddings.hpp"
#include "segalm/example_builder.hpp"

using namespace segalm;

namespace {

std::string data_path(const char* name) { return std::string(SEGALM_DATA_DIR) + "/" + name; }
Vocab fixture_vocab() { return load_vocab(data_path("fixture_vocab.txt")); }

Example small_example(const Vocab& v, int max_len = 12) {
    std::vector<IndexedToken> toks;
    for (int k = 0; k < 6; ++k) toks.push_back(IndexedToken{5 + k, k / 3, k % 3, k});
    auto xs = pack_pretraining(toks, max_len, v);
    REQUIRE(xs.size() == 1);
    return xs[0];
}

template <typename S>
ModelParams<S> random_model(PositionScheme scheme, const Vocab& v, std::uint64_t seed) {
    auto mp = alloc_model<S>(scheme, EncoderConfig::toy(), v.size());
    init_model(mp, seed);
    return mp;
}

}  // namespace

TEST_CASE("zero position tables and no layer norm reduce to token rows") {
    Vocab v = fixture_vocab();
    auto mp = alloc_model<double>(PositionScheme::SEGA, EncoderConfig::toy(), v.size());
    Rng rng(1);
    truncated_normal_fill(mp.embedding.token_table, 0.02, rng);
    Example ex = small_example(v);
    EmbedOptions opt;
    opt.layer_norm = false;
    Mat<double> out = embed(ex, mp.embedding, PositionScheme::SEGA, opt);
    for (int j = 0; j < ex.max_len(); ++j)
        CHECK((out.col(j) - mp.embedding.token_table.col(ex.ids[static_cast<std::size_t>(j)]))
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
}

TEST_CASE("equal ids and triples embed identically") {
    Vocab v = fixture_vocab();
    auto mp = random_model<double>(PositionScheme::SEGA, v, 7);
    Example ex = Example::blank(6, v.pad_id());
    ex.ids = {v.cls_id(), 9, 9, 9, v.sep_id(), v.pad_id()};
    ex.p = {0, 1, 1, 1, 1, 0};
    ex.s = {0, 2, 2, 2, 2, 0};
    ex.t = {0, 3, 3, 3, 4, 0};
    ex.attn_mask = {1, 1, 1, 1, 1, 0};
    Mat<double> out = embed(ex, mp.embedding, PositionScheme::SEGA);
    CHECK((out.col(1) - out.col(2)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((out.col(2) - out.col(3)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((out.col(3) - out.col(4)).cwiseAbs().maxCoeff() > 0.0);  // different t
}

// Direct arithmetic oracle: with layer norm off and a shared token table,
// SEGA and GLOBAL columns differ by exactly (P^t + P^s + P^p - G).
TEST_CASE("SEGA equals GLOBAL plus table delta when norm is off") {
    Vocab v = fixture_vocab();
    std::mt19937_64 seed_rng(99);
    for (int draw = 0; draw < 100; ++draw) {
        auto sega = random_model<double>(PositionScheme::SEGA, v, seed_rng());
        auto global = random_model<double>(PositionScheme::GLOBAL, v, seed_rng());
        global.embedding.token_table = sega.embedding.token_table;
        Example ex = small_example(v);
        EmbedOptions opt;
        opt.layer_norm = false;
        Mat<double> a = embed(ex, sega.embedding, PositionScheme::SEGA, opt);
        Mat<double> b = embed(ex, global.embedding, PositionScheme::GLOBAL, opt);
        for (int j = 0; j < ex.max_len(); ++j) {
            const std::size_t js = static_cast<std::size_t>(j);
            Vec<double> delta = sega.embedding.tok_table.col(ex.t[js]) +
                                sega.embedding.sent_table.col(ex.s[js]) +
                                sega.embedding.para_table.col(ex.p[js]) -
                                global.embedding.global_table.col(j);
            CHECK((a.col(j) - (b.col(j) + delta)).cwiseAbs().maxCoeff() < 1e-6);
        }
    }
}

TEST_CASE("position parameter counts match the table arithmetic") {
    CHECK(position_param_count(PositionScheme::SEGA, 768) == 311808);
    CHECK(position_param_count(PositionScheme::GLOBAL, 768) == 393216);
    CHECK(position_param_count(PositionScheme::GLOBAL_PLUS_PS, 768) == 508416);
    std::mt19937 rng(3);
    for (int i = 0; i < 100; ++i) {
        int h = 1 + static_cast<int>(rng() % 4096);
        auto sega = position_param_count(PositionScheme::SEGA, h);
        auto global = position_param_count(PositionScheme::GLOBAL, h);
        auto plus = position_param_count(PositionScheme::GLOBAL_PLUS_PS, h);
        CHECK(sega < global);
        CHECK(global < plus);
    }
}

TEST_CASE("allocated tables match the scheme registry") {
    Vocab v = fixture_vocab();
    auto sega = alloc_model<float>(PositionScheme::SEGA, EncoderConfig::toy(), v.size());
    CHECK(sega.embedding.para_table.cols() == 50);
    CHECK(sega.embedding.sent_table.cols() == 100);
    CHECK(sega.embedding.tok_table.cols() == 256);
    CHECK(sega.embedding.global_table.cols() == 0);
    auto global = alloc_model<float>(PositionScheme::GLOBAL, EncoderConfig::toy(), v.size());
    CHECK(global.embedding.global_table.cols() == 512);
    CHECK(global.embedding.para_table.cols() == 0);
    auto plus = alloc_model<float>(PositionScheme::GLOBAL_PLUS_PS, EncoderConfig::toy(), v.size());
    CHECK(plus.embedding.global_table.cols() == 512);
    CHECK(plus.embedding.para_table.cols() == 50);
    CHECK(plus.embedding.sent_table.cols() == 100);
    CHECK(plus.embedding.tok_table.cols() == 0);
}

TEST_CASE("swapping two tokens differing only in indices moves two columns") {
    Vocab v = fixture_vocab();
    auto mp = random_model<double>(PositionScheme::SEGA, v, 21);
    Example a = Example::blank(6, v.pad_id());
    a.ids = {v.cls_id(), 9, 9, 10, v.sep_id(), v.pad_id()};
    a.p = {0, 0, 1, 1, 1, 0};
    a.s = {0, 0, 1, 1, 1, 0};
    a.t = {0, 0, 1, 2, 3, 0};
    a.attn_mask = {1, 1, 1, 1, 1, 0};
    Example b = a;
    std::swap(b.p[1], b.p[2]);
    std::swap(b.s[1], b.s[2]);
    std::swap(b.t[1], b.t[2]);
    EmbedOptions opt;
    opt.layer_norm = false;
    Mat<double> xa = embed(a, mp.embedding, PositionScheme::SEGA, opt);
    Mat<double> xb = embed(b, mp.embedding, PositionScheme::SEGA, opt);
    CHECK((xa.col(1) - xb.col(1)).cwiseAbs().maxCoeff() > 0.0);
    CHECK((xa.col(2) - xb.col(2)).cwiseAbs().maxCoeff() > 0.0);
    for (int j : {0, 3, 4, 5}) CHECK((xa.col(j) - xb.col(j)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("out-of-table indices are rejected") {
    Vocab v = fixture_vocab();
    auto mp = random_model<double>(PositionScheme::SEGA, v, 5);
    Example ex = small_example(v);
    ex.t[2] = 300;  // beyond the 256-entry table
    CHECK_THROWS_AS(embed(ex, mp.embedding, PositionScheme::SEGA), IndexOutOfTable);
}

TEST_CASE("manifest names carry exactly one objective head") {
    Vocab v = fixture_vocab();
    auto mp = random_model<float>(PositionScheme::SEGA, v, 1);
    bool any_second_head = false;
    for (const auto& t : mp.manifest()) {
        const bool known = t.name.rfind("embed.", 0) == 0 || t.name.rfind("enc.", 0) == 0 ||
                           t.name.rfind("mlm.", 0) == 0;
        if (!known) any_second_head = true;
    }
    CHECK_FALSE(any_second_head);
}
