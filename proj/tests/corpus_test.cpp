#include <algorithm>
#include <filesystem>
#include <map>
#include <fstream>
#include <set>
#include <unordered_set>

#include "codesum/corpus/batch.hpp"
#include "codesum/corpus/dataset.hpp"
#include "codesum/corpus/subtoken.hpp"
#include "codesum/corpus/synthetic.hpp"
#include "codesum/errors.hpp"
#include "doctest.h"

using namespace codesum;

namespace {

using Tokens = std::vector<std::string>;

Tokens words(const std::string& text) { return tokenize_summary(text); }

// A vocabulary with exactly `n` entries (specials plus filler words).
Vocabulary vocabulary_of_size(std::size_t n, const Tokens& first = {}) {
    Tokens tokens = first;
    for (std::size_t i = 0; tokens.size() + Vocabulary::kNumSpecials < n; ++i) {
        tokens.push_back("w" + std::to_string(i));
    }
    return Vocabulary::from_tokens(tokens);
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("codesum_corpus_test_" + name);
}

} // namespace

TEST_CASE("split_subtokens examples") {
    CHECK(split_subtokens("snake_case") == Tokens{"snake", "case"});
    CHECK(split_subtokens("CamelCase") == Tokens{"camel", "case"});
    CHECK(split_subtokens("parseHTTPResponse") == Tokens{"parse", "http", "response"});
    CHECK(split_subtokens("x") == Tokens{"x"});
    CHECK(split_subtokens("__init__") == Tokens{"init"});
    CHECK(split_subtokens("utf8Decoder") == Tokens{"utf8", "decoder"});
    CHECK(split_subtokens("getX") == Tokens{"get", "x"});
    CHECK(split_subtokens("(") == Tokens{"("});
    CHECK(split_subtokens("IOError") == Tokens{"io", "error"});
}

TEST_CASE("split_subtokens is idempotent on its outputs") {
    Rng rng(7);
    const std::string alphabet = "abcXYZ_09";
    for (int trial = 0; trial < 500; ++trial) {
        std::string token;
        const std::size_t len = 1 + rng.below(12);
        for (std::size_t i = 0; i < len; ++i) {
            token.push_back(alphabet[rng.below(alphabet.size())]);
        }
        for (const std::string& part : split_subtokens(token)) {
            INFO(token << " -> " << part);
            CHECK(split_subtokens(part) == Tokens{part});
        }
    }
}

TEST_CASE("tokenize_code splits identifiers inside a snippet") {
    CHECK(tokenize_code("int getMaxValue ( )") == Tokens{"int", "get", "max", "value", "(", ")"});
    CHECK(tokenize_summary("Returns The MAX") == Tokens{"returns", "the", "max"});
}

TEST_CASE("build_vocabulary frequency order, ties and cap") {
    {
        const std::vector<Tokens> corpus{words("a a b")};
        const Vocabulary v = build_vocabulary(corpus, 6);
        CHECK(v.size() == 6);
        CHECK(v.id("a") == 4);
        CHECK(v.id("b") == 5);
    }
    {
        const std::vector<Tokens> corpus{words("b b a a")};
        const Vocabulary v = build_vocabulary(corpus, 6);
        CHECK(v.id("a") == 4);
        CHECK(v.id("b") == 5);
    }
    {
        // t0 appears 10 times, t1 9 times, ... t9 once.
        std::vector<Tokens> corpus;
        for (int t = 0; t < 10; ++t) {
            corpus.push_back(Tokens(static_cast<std::size_t>(10 - t), "t" + std::to_string(t)));
        }
        const Vocabulary v = build_vocabulary(corpus, 8);
        CHECK(v.size() == 8);
        for (int t = 0; t < 4; ++t) {
            CHECK(v.id("t" + std::to_string(t)) == 4 + t);
        }
        for (int t = 4; t < 10; ++t) {
            CHECK(v.id("t" + std::to_string(t)) == Vocabulary::kUnk);
        }
    }
    const std::vector<Tokens> corpus{words("x y"), words("y z")};
    CHECK(build_vocabulary(corpus, 100) == build_vocabulary(corpus, 100));
    CHECK(build_vocabulary(corpus, 100, 2).size() == 5);
    CHECK_THROWS_AS(build_vocabulary(corpus, 4), ConfigError);
    CHECK_THROWS_AS(build_vocabulary(std::vector<Tokens>{}, 10), ConfigError);
}

TEST_CASE("vocabulary specials and file round trip") {
    const Vocabulary v = Vocabulary::from_tokens({"foo", "bar"});
    CHECK(v.token(Vocabulary::kPad) == "<pad>");
    CHECK(v.token(Vocabulary::kUnk) == "<unk>");
    CHECK(v.token(Vocabulary::kBos) == "<s>");
    CHECK(v.token(Vocabulary::kEos) == "</s>");
    CHECK(v.id("nope") == Vocabulary::kUnk);
    CHECK_THROWS_AS(v.token(99), ContractError);
    CHECK_THROWS_AS(Vocabulary::from_tokens({"a", "a"}), ContractError);

    const auto path = temp_path("vocab.tsv");
    v.save(path);
    const Vocabulary back = Vocabulary::load(path);
    CHECK(back == v);
    CHECK(back.fingerprint() == v.fingerprint());
    CHECK(v.fingerprint() != Vocabulary::from_tokens({"bar", "foo"}).fingerprint());
    std::filesystem::remove(path);
}

TEST_CASE("encode_with_copy examples") {
    const Vocabulary vocab = vocabulary_of_size(100, {"foo", "bar", "returns"});
    REQUIRE(vocab.size() == 100);

    const Example plain = encode_with_copy({"foo", "bar"}, {"returns"}, vocab, vocab);
    CHECK(plain.src_extended_ids == plain.code_ids);
    CHECK(plain.oov_list.empty());

    const Example oov = encode_with_copy({"qzx"}, {"returns", "qzx", "zzz"}, vocab, vocab);
    CHECK(oov.code_ids == std::vector<std::int64_t>{Vocabulary::kUnk});
    CHECK(oov.src_extended_ids == std::vector<std::int64_t>{100});
    CHECK(oov.oov_list == Tokens{"qzx"});
    CHECK(oov.summary_ids == std::vector<std::int64_t>{vocab.id("returns"), Vocabulary::kUnk, Vocabulary::kUnk});
    CHECK(oov.summary_extended_ids == std::vector<std::int64_t>{vocab.id("returns"), 100, Vocabulary::kUnk});

    // Repeated OOV tokens share one extended id, in first-occurrence order.
    const Example rep = encode_with_copy({"qq", "foo", "rr", "qq"}, {}, vocab, vocab);
    CHECK(rep.src_extended_ids == std::vector<std::int64_t>{100, vocab.id("foo"), 101, 100});
    CHECK(rep.oov_list == Tokens{"qq", "rr"});
}

TEST_CASE("extended ids live in the target vocabulary") {
    const Vocabulary src = Vocabulary::from_tokens({"alpha", "beta"});
    const Vocabulary tgt = Vocabulary::from_tokens({"beta", "gamma", "delta"});
    const Example ex = encode_with_copy({"alpha", "beta"}, {"alpha", "beta"}, src, tgt);
    CHECK(ex.code_ids == std::vector<std::int64_t>{4, 5});
    CHECK(ex.src_extended_ids == std::vector<std::int64_t>{7, 4});
    CHECK(ex.summary_extended_ids == std::vector<std::int64_t>{7, 4});
    CHECK(extended_token(7, tgt, ex.oov_list) == "alpha");
    CHECK(extended_token(4, tgt, ex.oov_list) == "beta");
    CHECK_THROWS_AS(extended_token(8, tgt, ex.oov_list), ContractError);
    CHECK_THROWS_AS(extended_token(-1, tgt, ex.oov_list), ContractError);
}

TEST_CASE("make_batch examples") {
    const Vocabulary vocab = vocabulary_of_size(20, {"a", "b", "c", "d", "e"});
    {
        const std::vector<Example> exs{encode_with_copy({"a", "b", "c"}, {"d", "e"}, vocab, vocab)};
        const Batch b = make_batch(exs, 400, 50);
        CHECK(b.batch_size == 1);
        CHECK(b.src_len == 3);
        CHECK(b.tgt_len == 3);
        CHECK(b.src_mask == std::vector<std::uint8_t>{1, 1, 1});
        CHECK(b.tgt_in_ids == std::vector<std::int64_t>{Vocabulary::kBos, vocab.id("d"), vocab.id("e")});
        CHECK(b.tgt_out_extended_ids == std::vector<std::int64_t>{vocab.id("d"), vocab.id("e"), Vocabulary::kEos});
        CHECK(b.tgt_mask == std::vector<std::uint8_t>{1, 1, 1});
    }
    {
        const std::vector<Example> exs{encode_with_copy({"a", "b"}, {"c"}, vocab, vocab),
                                       encode_with_copy({"a", "b", "c", "d", "e"}, {"c"}, vocab, vocab)};
        const Batch b = make_batch(exs, 400, 50);
        CHECK(b.src_len == 5);
        const std::vector<std::int64_t> row0(b.src_ids.begin(), b.src_ids.begin() + 5);
        CHECK(row0 == std::vector<std::int64_t>{vocab.id("a"), vocab.id("b"), 0, 0, 0});
        const std::vector<std::uint8_t> mask0(b.src_mask.begin(), b.src_mask.begin() + 5);
        CHECK(mask0 == std::vector<std::uint8_t>{1, 1, 0, 0, 0});
    }
    {
        const std::vector<Example> exs{encode_with_copy({"a"}, {"a"}, vocab, vocab),
                                       encode_with_copy({"xx", "yy"}, {"a"}, vocab, vocab)};
        CHECK(make_batch(exs, 400, 50).max_oov == 2);
    }
}

TEST_CASE("make_batch truncation, skipping and errors") {
    const Vocabulary vocab = vocabulary_of_size(10, {"a", "b"});
    const std::vector<Example> exs{encode_with_copy({}, {"a"}, vocab, vocab),
                                   encode_with_copy({"a", "b", "qq"}, {"qq", "a", "b"}, vocab, vocab)};
    const Batch b = make_batch(exs, 2, 2);
    CHECK(b.skipped == 1);
    CHECK(b.batch_size == 1);
    CHECK(b.origin == std::vector<std::size_t>{1});
    CHECK(b.src_len == 2);
    // max_oov counts the example's whole OOV list, truncated or not.
    CHECK(b.max_oov == 1);
    // "qq" was truncated out of the source, so it can no longer be copied.
    CHECK(b.tgt_out_extended_ids == std::vector<std::int64_t>{Vocabulary::kUnk, vocab.id("a"), Vocabulary::kEos});
    CHECK_THROWS_AS(make_batch(std::vector<Example>{}, 4, 4), ContractError);
    CHECK_THROWS_AS(make_batch(std::span<const Example>(exs).first(1), 4, 4), ContractError);
}

TEST_CASE("ids round trip to the sub-tokenised input") {
    const auto bundle = synthetic::make_bundle(3);
    const auto records = tokenize_records(bundle.copy_train);
    // Vocabularies from a handful of records, so most identifiers are OOV.
    const std::vector<TokenizedRecord> few(records.begin(), records.begin() + 5);
    const Vocabulary src = build_vocabulary(code_side(few), 40);
    const Vocabulary tgt = build_vocabulary(summary_side(few), 40);
    for (std::size_t i = 0; i < 50; ++i) {
        const Example ex = encode_with_copy(records[i].code, records[i].summary, src, tgt);
        for (std::size_t j = 0; j < ex.code_tokens.size(); ++j) {
            CHECK(extended_token(ex.src_extended_ids[j], tgt, ex.oov_list) == ex.code_tokens[j]);
        }
        for (std::size_t j = 0; j < ex.summary_tokens.size(); ++j) {
            // Summary tokens resolve unless they are neither in vocabulary nor in the source.
            const bool recoverable = tgt.contains(ex.summary_tokens[j]) ||
                                     std::ranges::count(ex.code_tokens, ex.summary_tokens[j]) > 0;
            if (recoverable) {
                CHECK(extended_token(ex.summary_extended_ids[j], tgt, ex.oov_list) == ex.summary_tokens[j]);
            } else {
                CHECK(ex.summary_extended_ids[j] == Vocabulary::kUnk);
            }
        }
    }
}

TEST_CASE("make_batch is permutation-equivariant per row") {
    const auto bundle = synthetic::make_bundle(5);
    const auto records = tokenize_records(bundle.offset_train);
    const Vocabulary vocab = build_vocabulary(code_side(records), 30);
    std::vector<Example> exs;
    for (std::size_t i = 0; i < 8; ++i) {
        exs.push_back(encode_with_copy(records[i].code, records[i].summary, vocab, vocab));
    }
    const std::vector<std::size_t> perm{3, 0, 7, 5, 1, 6, 2, 4};
    std::vector<Example> shuffled;
    for (std::size_t p : perm) {
        shuffled.push_back(exs[p]);
    }
    const Batch a = make_batch(exs, 400, 50);
    const Batch b = make_batch(shuffled, 400, 50);
    REQUIRE(a.src_len == b.src_len);
    REQUIRE(a.tgt_len == b.tgt_len);
    for (std::size_t r = 0; r < perm.size(); ++r) {
        const std::size_t S = a.src_len;
        const std::size_t T = a.tgt_len;
        auto row = [](const auto& v, std::size_t i, std::size_t n) {
            return std::vector(v.begin() + static_cast<std::ptrdiff_t>(i * n),
                               v.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
        };
        CHECK(row(b.src_ids, r, S) == row(a.src_ids, perm[r], S));
        CHECK(row(b.src_extended_ids, r, S) == row(a.src_extended_ids, perm[r], S));
        CHECK(row(b.src_mask, r, S) == row(a.src_mask, perm[r], S));
        CHECK(row(b.tgt_in_ids, r, T) == row(a.tgt_in_ids, perm[r], T));
        CHECK(row(b.tgt_out_extended_ids, r, T) == row(a.tgt_out_extended_ids, perm[r], T));
        CHECK(row(b.tgt_mask, r, T) == row(a.tgt_mask, perm[r], T));
    }
}

TEST_CASE("bucketed_batches covers every example once and is seeded") {
    const auto bundle = synthetic::make_bundle(9);
    const auto records = tokenize_records(bundle.offset_train);
    const Vocabulary vocab = build_vocabulary(code_side(records), 30);
    const auto exs = encode_all(records, vocab, vocab);
    Rng r1(4);
    Rng r2(4);
    const auto plan = bucketed_batches(exs, 32, r1, 4);
    CHECK(plan == bucketed_batches(exs, 32, r2, 4));
    std::vector<std::size_t> seen;
    for (const auto& batch : plan) {
        CHECK(batch.size() <= 32);
        seen.insert(seen.end(), batch.begin(), batch.end());
    }
    std::ranges::sort(seen);
    for (std::size_t i = 0; i < seen.size(); ++i) {
        REQUIRE(seen[i] == i);
    }
    CHECK(seen.size() == exs.size());
}

TEST_CASE("record files round trip and report bad lines") {
    const auto path = temp_path("records.jsonl");
    const std::vector<Record> recs{{"int getX ( )", "returns x"}, {"a \"quoted\" b", "tab\there"}};
    write_records(path, recs);
    const auto back = read_records(path);
    REQUIRE(back.size() == 2);
    CHECK(back[1].code == recs[1].code);
    CHECK(back[1].summary == recs[1].summary);

    {
        std::ofstream out(path);
        out << R"({"code": "a", "summary": "b"})" << "\n" << R"({"code": "a"})" << "\n";
    }
    try {
        read_records(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_records(path), FormatError);
}

TEST_CASE("synthetic tasks have the documented shape") {
    Rng rng(11);
    std::unordered_set<std::string> used;
    for (const Record& r : synthetic::identifier_copy(200, rng, used)) {
        const Tokens code = tokenize_code(r.code);
        const Tokens summary = tokenize_summary(r.summary);
        // The identifier is the only token longer than four letters shared by both sides.
        std::set<std::string> shared;
        for (const auto& t : summary) {
            if (std::ranges::count(code, t) > 0 && used.contains(t)) {
                shared.insert(t);
            }
        }
        CHECK(shared.size() == 1);
    }
    CHECK(used.size() == 200);

    for (const Record& r : synthetic::relative_offset(200, rng, 2, 5)) {
        const Tokens code = tokenize_code(r.code);
        const auto mark = std::ranges::find(code, "mark") - code.begin();
        CHECK(mark >= 2);
        CHECK(mark <= 5);
        CHECK(tokenize_summary(r.summary) == Tokens(code.begin() + mark + 1, code.begin() + mark + 4));
    }

    for (const Record& r : synthetic::direction(200, rng)) {
        const Tokens code = tokenize_code(r.code);
        const auto mark = std::ranges::find(code, "mark") - code.begin();
        REQUIRE(mark >= 1);
        REQUIRE(mark + 1 < static_cast<std::ptrdiff_t>(code.size()));
        CHECK(tokenize_summary(r.summary) == Tokens{code[mark + 1], code[mark - 1]});
        CHECK(code[mark + 1] != code[mark - 1]);
    }
}

TEST_CASE("bundled synthetic data matches the generator") {
    const std::filesystem::path dir = std::filesystem::path(CODESUM_DATA_DIR) / "synthetic";
    const auto bundle = synthetic::make_bundle();
    const std::map<std::string, const std::vector<Record>*> files{
        {"copy/train.jsonl", &bundle.copy_train},           {"copy/valid.jsonl", &bundle.copy_valid},
        {"copy/test.jsonl", &bundle.copy_test},             {"offset/train.jsonl", &bundle.offset_train},
        {"offset/valid.jsonl", &bundle.offset_valid},       {"offset/test.jsonl", &bundle.offset_test},
        {"direction/train.jsonl", &bundle.direction_train}, {"direction/valid.jsonl", &bundle.direction_valid},
        {"direction/test.jsonl", &bundle.direction_test},   {"overfit64.jsonl", &bundle.overfit}};
    for (const auto& [name, expected] : files) {
        INFO(name);
        const auto recs = read_records(dir / name);
        REQUIRE(recs.size() == expected->size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            CHECK(recs[i].code == (*expected)[i].code);
            CHECK(recs[i].summary == (*expected)[i].summary);
        }
    }
}
