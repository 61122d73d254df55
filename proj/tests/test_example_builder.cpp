#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>

#include "segalm/example_builder.hpp"

using namespace segalm;

namespace {

std::string data_path(const char* name) { return std::string(SEGALM_DATA_DIR) + "/" + name; }
Vocab fixture_vocab() { return load_vocab(data_path("fixture_vocab.txt")); }

std::vector<IndexedToken> flat_tokens(int n, int id = 7) {
    std::vector<IndexedToken> toks;
    SegmentCaps caps;
    for (int k = 0; k < n; ++k)
        toks.push_back(IndexedToken{id, 0, 0, std::min(k, caps.max_tokens_per_sentence - 1)});
    return toks;
}

std::vector<SubToken> letters(int n, const Vocab& v, char c = 'b') {
    std::vector<SubToken> out;
    std::string s(1, c);
    for (int i = 0; i < n; ++i) out.push_back(SubToken{v.find(s), s, false});
    return out;
}

}  // namespace

TEST_CASE("pack of three tokens fits one example") {
    Vocab v = fixture_vocab();
    auto xs = pack_pretraining(flat_tokens(3), 8, v);
    REQUIRE(xs.size() == 1);
    const Example& ex = xs[0];
    CHECK(ex.ids[0] == v.cls_id());
    CHECK((ex.p[0] == 0 && ex.s[0] == 0 && ex.t[0] == 0));
    CHECK((ex.t[1] == 0 && ex.t[2] == 1 && ex.t[3] == 2));
    CHECK(ex.ids[4] == v.sep_id());
    CHECK((ex.p[4] == 0 && ex.s[4] == 0 && ex.t[4] == 3));  // [SEP] inherits, next t
    for (int i = 5; i < 8; ++i) {
        CHECK(ex.attn_mask[static_cast<std::size_t>(i)] == 0);
        CHECK(ex.ids[static_cast<std::size_t>(i)] == v.pad_id());
    }
    CHECK(validate_example(ex, v, SegmentCaps{}).empty());
}

// Brute-force packer: greedy fill of max_len-2 content slots per example.
TEST_CASE("pack splits long documents by ceiling division") {
    Vocab v = fixture_vocab();
    auto xs = pack_pretraining(flat_tokens(1022), 512, v);
    std::size_t expected = (1022 + 509) / 510;  // independent oracle
    REQUIRE(expected == 3);
    REQUIRE(xs.size() == 3);
    CHECK(xs[0].length() == 512);
    CHECK(xs[1].length() == 512);
    CHECK(xs[2].length() == 4);  // CLS + 2 content + SEP
    for (const auto& ex : xs) CHECK(validate_example(ex, v, SegmentCaps{}).empty());
}

TEST_CASE("pack of empty document is empty") {
    Vocab v = fixture_vocab();
    CHECK(pack_pretraining({}, 512, v).empty());
}

TEST_CASE("SEP after a clamped sentence stays inside the table") {
    Vocab v = fixture_vocab();
    auto xs = pack_pretraining(flat_tokens(300), 512, v);
    REQUIRE(xs.size() == 1);
    const Example& ex = xs[0];
    int last = ex.length() - 1;
    CHECK(ex.ids[static_cast<std::size_t>(last)] == v.sep_id());
    CHECK(ex.t[static_cast<std::size_t>(last)] == 255);  // min(255+1, 255)
}

TEST_CASE("pair layout assigns paragraph 0 and 1") {
    Vocab v = fixture_vocab();
    auto a1 = SubToken{v.find("cat"), "cat", false};
    auto a2 = SubToken{v.find("dog"), "dog", false};
    auto b1 = SubToken{v.find("sun"), "sun", false};
    Example ex = build_pair({a1, a2}, {b1}, v, 16);
    // CLS(0,0,0) a1(0,0,0) a2(0,0,1) SEP(0,0,2) b1(1,0,0) SEP(1,0,1)
    CHECK(ex.kind == ExampleKind::PairClassify);
    CHECK((ex.p[0] == 0 && ex.s[0] == 0 && ex.t[0] == 0));
    CHECK((ex.p[1] == 0 && ex.t[1] == 0));
    CHECK((ex.p[2] == 0 && ex.t[2] == 1));
    CHECK(ex.ids[3] == v.sep_id());
    CHECK((ex.p[3] == 0 && ex.s[3] == 0 && ex.t[3] == 2));
    CHECK((ex.p[4] == 1 && ex.s[4] == 0 && ex.t[4] == 0));
    CHECK(ex.ids[5] == v.sep_id());
    CHECK((ex.p[5] == 1 && ex.s[5] == 0 && ex.t[5] == 1));
    CHECK(ex.length() == 6);
    CHECK(validate_example(ex, v, SegmentCaps{}).empty());
}

TEST_CASE("single-sentence layout is paragraph 0 sentence 0") {
    Vocab v = fixture_vocab();
    Example ex = build_single(letters(3, v), v, 16);
    CHECK(ex.kind == ExampleKind::SingleClassify);
    for (int i = 0; i < 5; ++i) {
        CHECK(ex.p[static_cast<std::size_t>(i)] == 0);
        CHECK(ex.s[static_cast<std::size_t>(i)] == 0);
    }
    CHECK(validate_example(ex, v, SegmentCaps{}).empty());
    CHECK_THROWS_AS(build_pair(letters(2, v), {}, v, 16), EmptySequence);
}

// Length oracle: content capacity is max_len - 3; iterative longest-first
// trimming leaves A at capacity - |B| when A started longer.
TEST_CASE("over-long pairs truncate the longer side") {
    Vocab v = fixture_vocab();
    Example ex = build_pair(letters(600, v), letters(10, v, 'c'), v, 512);
    int len_a = 0, len_b = 0;
    for (int i = 0; i < ex.length(); ++i) {
        if (ex.ids[static_cast<std::size_t>(i)] == v.sep_id() ||
            ex.ids[static_cast<std::size_t>(i)] == v.cls_id())
            continue;
        if (ex.p[static_cast<std::size_t>(i)] == 0)
            ++len_a;
        else
            ++len_b;
    }
    CHECK(len_b == 10);
    CHECK(len_a == 512 - 3 - 10);  // = 499
    CHECK(ex.length() == 512);
    CHECK(validate_example(ex, v, SegmentCaps{}).empty());
}

TEST_CASE("pair paragraph multiset is exactly {0,1}") {
    Vocab v = fixture_vocab();
    std::mt19937 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        int na = 1 + static_cast<int>(rng() % 40);
        int nb = 1 + static_cast<int>(rng() % 40);
        Example ex = build_pair(letters(na, v), letters(nb, v, 'c'), v, 64);
        std::map<int, int> paras;
        for (int i = 0; i < ex.length(); ++i) {
            int id = ex.ids[static_cast<std::size_t>(i)];
            if (id == v.cls_id() || id == v.sep_id()) continue;
            paras[ex.p[static_cast<std::size_t>(i)]]++;
        }
        REQUIRE(paras.size() == 2);
        REQUIRE(paras.count(0) == 1);
        REQUIRE(paras.count(1) == 1);
        CHECK(validate_example(ex, v, SegmentCaps{}).empty());
    }
}

namespace {
SpanContext make_ctx(const Vocab& v, const std::vector<std::vector<int>>& shape) {
    SpanContext ctx;
    for (const auto& para : shape) {
        std::vector<std::vector<SubToken>> sents;
        for (int n : para) {
            std::vector<SubToken> sent;
            for (int k = 0; k < n; ++k) sent.push_back(SubToken{v.find("cat"), "cat", false});
            sents.push_back(std::move(sent));
        }
        ctx.push_back(std::move(sents));
    }
    return ctx;
}
}  // namespace

TEST_CASE("span layout: question p=0, context paragraphs from 1, sentences from 0") {
    Vocab v = fixture_vocab();
    auto q = letters(1, v, 'q');
    // paragraph with sentences of 2 and 1 tokens
    Example ex = build_span(q, make_ctx(v, {{2, 1}}), v, 16);
    // CLS q SEP x1 x2 y1 SEP
    CHECK((ex.p[1] == 0 && ex.s[1] == 0 && ex.t[1] == 0));          // q
    CHECK((ex.p[3] == 1 && ex.s[3] == 0 && ex.t[3] == 0));          // x1
    CHECK((ex.p[4] == 1 && ex.s[4] == 0 && ex.t[4] == 1));          // x2
    CHECK((ex.p[5] == 1 && ex.s[5] == 1 && ex.t[5] == 0));          // y1
    CHECK(ex.ids[6] == v.sep_id());
    CHECK(ex.length() == 7);
    CHECK(validate_example(ex, v, SegmentCaps{}).empty());

    Example two = build_span(q, make_ctx(v, {{1}, {1}}), v, 16);
    CHECK(two.p[3] == 1);
    CHECK(two.p[4] == 2);
}

TEST_CASE("span answers map to packed positions") {
    Vocab v = fixture_vocab();
    auto q = letters(2, v, 'q');
    Example ex = build_span(q, make_ctx(v, {{3}}), v, 16, SegmentCaps{}, 1, 2);
    // positions: 0=CLS 1,2=q 3=SEP 4,5,6=context
    CHECK(ex.span_start == 5);
    CHECK(ex.span_end == 6);
}

TEST_CASE("answer beyond the window raises AnswerOutOfWindow") {
    Vocab v = fixture_vocab();
    auto q = letters(1, v, 'q');
    CHECK_THROWS_AS(build_span(q, make_ctx(v, {{700}}), v, 512, SegmentCaps{}, 600, 600),
                    AnswerOutOfWindow);
    CHECK_THROWS_AS(build_span({}, make_ctx(v, {{3}}), v, 16), EmptyQuestion);
}

TEST_CASE("span paragraph indices over context are non-decreasing from 1") {
    Vocab v = fixture_vocab();
    std::mt19937 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::vector<int>> shape;
        int np = 1 + static_cast<int>(rng() % 4);
        for (int i = 0; i < np; ++i) {
            std::vector<int> para;
            int ns = 1 + static_cast<int>(rng() % 3);
            for (int j = 0; j < ns; ++j) para.push_back(1 + static_cast<int>(rng() % 5));
            shape.push_back(std::move(para));
        }
        Example ex = build_span(letters(2, v, 'q'), make_ctx(v, shape), v, 128);
        bool after_first_sep = false;
        int prev_p = 0;
        for (int i = 0; i < ex.length() - 1; ++i) {
            int id = ex.ids[static_cast<std::size_t>(i)];
            if (id == v.sep_id() && !after_first_sep) {
                after_first_sep = true;
                continue;
            }
            if (!after_first_sep) {
                CHECK(ex.p[static_cast<std::size_t>(i)] == 0);
                continue;
            }
            int p = ex.p[static_cast<std::size_t>(i)];
            CHECK(p >= 1);
            CHECK(p >= prev_p);
            prev_p = p;
        }
        CHECK(validate_example(ex, v, SegmentCaps{}).empty());
    }
}
