#include <cmath>

#include "codesum/decoding/beam.hpp"
#include "codesum/errors.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/toy_lm.hpp"

using namespace codesum;

namespace {

struct RandomSource {
    std::vector<std::int64_t> ids;
    std::vector<std::int64_t> extended;
    std::size_t max_oov = 0;
};

RandomSource random_source(const ModelConfig& c, Rng rng) {
    RandomSource s;
    const std::size_t n = 1 + rng.below(6);
    for (std::size_t i = 0; i < n; ++i) {
        s.ids.push_back(4 + static_cast<std::int64_t>(rng.below(c.src_vocab_size - 4)));
        if (rng.uniform() < 0.3) {
            s.extended.push_back(static_cast<std::int64_t>(c.tgt_vocab_size + s.max_oov++));
        } else {
            s.extended.push_back(4 + static_cast<std::int64_t>(rng.below(c.tgt_vocab_size - 4)));
        }
    }
    return s;
}

ModelConfig random_tiny_config(Rng& rng) {
    const EncoderPosition modes[] = {EncoderPosition::absolute, EncoderPosition::relative_directional,
                                     EncoderPosition::relative_undirected};
    ModelConfig c = fixtures::tiny_config(modes[rng.below(3)], rng.below(2) == 1);
    c.precision = Precision::standard32;
    return c;
}

/// Wraps a scorer and records every fed token.
class RecordingScorer : public StepScorer {
  public:
    explicit RecordingScorer(StepScorer& inner) : inner_(inner) {}
    std::vector<std::vector<double>> step(const std::vector<std::int64_t>& tokens) override {
        fed.insert(fed.end(), tokens.begin(), tokens.end());
        return inner_.step(tokens);
    }
    void reorder(const std::vector<std::size_t>& parents) override { inner_.reorder(parents); }
    std::size_t vocab_size() const override { return inner_.vocab_size(); }
    std::vector<std::int64_t> fed;

  private:
    StepScorer& inner_;
};

} // namespace

TEST_CASE("beam of one equals greedy decoding on random models") {
    Rng rng(404);
    for (std::uint64_t i = 0; i < 100; ++i) {
        Rng r = rng.split(i);
        const ModelConfig c = random_tiny_config(r);
        const Model model(c, 1000 + i);
        const RandomSource src = random_source(c, r.split("source"));
        const std::size_t max_len = 1 + r.below(8);
        ModelScorer a(model, src.ids, src.extended, src.max_oov);
        ModelScorer b(model, src.ids, src.extended, src.max_oov);
        const Hypothesis beam = beam_search(a, {1, max_len, 0.0});
        const Hypothesis greedy = greedy_decode(b, max_len);
        INFO("case " << i);
        CHECK(beam.tokens == greedy.tokens);
        CHECK(beam.log_prob == greedy.log_prob);
        CHECK(beam.truncated == greedy.truncated);
    }
}

TEST_CASE("beam search finds the garden path that greedy misses") {
    toy::GardenPath g;
    toy::PrefixScorer greedy_scorer(g.lm, g.vocab);
    const Hypothesis greedy = greedy_decode(greedy_scorer, 3);
    CHECK(greedy.tokens.front() == toy::GardenPath::a);

    toy::PrefixScorer beam_scorer(g.lm, g.vocab);
    const Hypothesis beam = beam_search(beam_scorer, {4, 3, 0.0});
    const Hypothesis oracle = toy::exhaustive_best(g.lm, g.support, 3);
    CHECK(oracle.tokens == std::vector<std::int64_t>{toy::GardenPath::b, toy::GardenPath::a, Vocabulary::kEos});
    CHECK(beam.tokens == oracle.tokens);
    CHECK(std::abs(beam.log_prob - std::log(0.4 * 0.9 * 0.98)) < 1e-12);
    CHECK(beam.finished);
    CHECK_FALSE(beam.truncated);
    CHECK(beam.log_prob > greedy.log_prob);
}

TEST_CASE("beam of four matches exhaustive search on the deep toy") {
    toy::DeepPath d;
    for (std::size_t max_len = 1; max_len <= 4; ++max_len) {
        toy::PrefixScorer scorer(d.lm, d.vocab);
        const Hypothesis beam = beam_search(scorer, {4, max_len, 0.0});
        const Hypothesis oracle = toy::exhaustive_best(d.lm, d.support, max_len);
        INFO("max_len " << max_len);
        CHECK(beam.tokens == oracle.tokens);
        CHECK(std::abs(beam.log_prob - oracle.log_prob) < 1e-12);
    }
}

TEST_CASE("beam of four is exhaustive when nothing is pruned") {
    // With at most four candidates alive per level, or two steps over at most
    // four tokens, the beam keeps every prefix that can still win.
    int cases = 0;
    for (std::size_t support_size = 2; support_size <= 5; ++support_size) {
        for (std::size_t max_len = 1; max_len <= 4; ++max_len) {
            const bool unpruned = max_len == 1 || support_size == 2 || (support_size <= 4 && max_len <= 2);
            if (!unpruned) {
                continue;
            }
            std::vector<std::int64_t> support{Vocabulary::kEos};
            for (std::size_t s = 1; s < support_size; ++s) {
                support.push_back(static_cast<std::int64_t>(3 + s));
            }
            for (std::uint64_t seed = 0; seed < 50; ++seed) {
                for (double alpha : {0.0, 0.7}) {
                    const auto lm = toy::random_lm(seed * 31 + support_size, support, 4 + support_size, 1.5);
                    toy::PrefixScorer scorer(lm, 4 + support_size);
                    const Hypothesis beam = beam_search(scorer, {4, max_len, alpha});
                    const Hypothesis oracle = toy::exhaustive_best(lm, support, max_len, alpha);
                    INFO("support " << support_size << " max_len " << max_len << " seed " << seed);
                    CHECK(beam.tokens == oracle.tokens);
                    ++cases;
                }
            }
        }
    }
    CHECK(cases > 0);
}

TEST_CASE("beam search agrees with the level-wise restatement") {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        Rng rng(seed);
        const std::size_t support_size = 2 + rng.below(4);
        const std::size_t max_len = 1 + rng.below(4);
        const std::size_t beam_size = 1 + rng.below(5);
        const double alpha = rng.below(2) ? 0.0 : 0.6;
        std::vector<std::int64_t> support{Vocabulary::kEos};
        for (std::size_t s = 1; s < support_size; ++s) {
            support.push_back(static_cast<std::int64_t>(3 + s));
        }
        const std::size_t vocab = 4 + support_size;
        const auto lm = toy::random_lm(seed, support, vocab);
        toy::PrefixScorer scorer(lm, vocab);
        const BeamConfig config{beam_size, max_len, alpha};
        const Hypothesis beam = beam_search(scorer, config);
        const Hypothesis ref = toy::levelwise_beam(lm, vocab, config);
        const Hypothesis best = toy::exhaustive_best(lm, support, max_len, alpha);
        INFO("seed " << seed);
        CHECK(beam.tokens == ref.tokens);
        CHECK(beam.log_prob == ref.log_prob);
        CHECK(std::abs(beam.log_prob - toy::sequence_log_prob(lm, beam)) < 1e-12);
        CHECK(toy::score(beam, alpha) <= toy::score(best, alpha) + 1e-12);
        CHECK(beam.finished);
        CHECK((beam.tokens.back() == Vocabulary::kEos) != beam.truncated);
        CHECK(beam.tokens.size() <= max_len);
    }
}

TEST_CASE("max_len without EOS truncates") {
    const auto never_stop = [&](const std::vector<std::int64_t>&) {
        std::vector<double> out(5, toy::kImpossible);
        out[3] = std::log(0.01);
        out[4] = std::log(0.99);
        return out;
    };
    toy::PrefixScorer scorer(never_stop, 5);
    const Hypothesis h = beam_search(scorer, {4, 3, 0.0});
    CHECK(h.tokens == std::vector<std::int64_t>{4, 4, 4});
    CHECK(h.finished);
    CHECK(h.truncated);
    CHECK(scorer.calls == 3);

    toy::PrefixScorer greedy_scorer(never_stop, 5);
    const Hypothesis g = greedy_decode(greedy_scorer, 2);
    CHECK(g.truncated);
    CHECK(g.tokens.size() == 2);
}

TEST_CASE("immediate EOS gives an empty summary") {
    const auto lm = toy::table_lm({{{}, {{Vocabulary::kEos, 0.9}, {4, 0.1}}}}, {Vocabulary::kEos, 4}, 5);
    toy::PrefixScorer scorer(lm, 5);
    const Hypothesis h = beam_search(scorer, {4, 5, 0.0});
    CHECK(h.tokens == std::vector<std::int64_t>{Vocabulary::kEos});
    CHECK_FALSE(h.truncated);
    const Vocabulary v = Vocabulary::from_tokens({"get"});
    CHECK(resolve_copies(h, v, {}).empty());
}

TEST_CASE("length normalisation changes the winner") {
    // EOS at once: p = 0.3. "4 EOS": 0.28. "4 4 EOS": 0.252, the best per token.
    const auto lm = toy::table_lm(
        {
            {{}, {{Vocabulary::kEos, 0.3}, {4, 0.7}}},
            {{4}, {{Vocabulary::kEos, 0.4}, {4, 0.6}}},
            {{4, 4}, {{Vocabulary::kEos, 0.6}, {4, 0.4}}},
        },
        {Vocabulary::kEos, 4}, 5);
    toy::PrefixScorer plain(lm, 5);
    CHECK(beam_search(plain, {4, 3, 0.0}).tokens == std::vector<std::int64_t>{Vocabulary::kEos});
    toy::PrefixScorer normalised(lm, 5);
    CHECK(beam_search(normalised, {4, 3, 1.0}).tokens == std::vector<std::int64_t>{4, 4, Vocabulary::kEos});
}

TEST_CASE("invalid beam settings") {
    toy::GardenPath g;
    toy::PrefixScorer scorer(g.lm, g.vocab);
    CHECK_THROWS_AS(beam_search(scorer, {0, 3, 0.0}), ConfigError);
    CHECK_THROWS_AS(beam_search(scorer, {4, 0, 0.0}), ConfigError);
    CHECK_THROWS_AS(greedy_decode(scorer, 0), ConfigError);
}

TEST_CASE("resolve_copies") {
    const Vocabulary v = Vocabulary::from_tokens({"get", "name"});
    const auto n = static_cast<std::int64_t>(v.size());
    Hypothesis h;
    h.tokens = {Vocabulary::kBos, v.id("get"), v.id("name"), Vocabulary::kEos};
    CHECK(resolve_copies(h, v, {}) == std::vector<std::string>{"get", "name"});
    h.tokens = {v.id("get"), n, Vocabulary::kEos};
    CHECK(resolve_copies(h, v, {"qzx"}) == std::vector<std::string>{"get", "qzx"});
    h.tokens = {n + 1};
    CHECK_THROWS_AS(resolve_copies(h, v, {"qzx"}), ContractError);
    h.tokens = {-1};
    CHECK_THROWS_AS(resolve_copies(h, v, {"qzx"}), ContractError);
}

TEST_CASE("extended ids are fed back as UNK") {
    ModelConfig c = fixtures::tiny_config(EncoderPosition::relative_directional, true);
    const Model model(c, 5);
    const std::vector<std::int64_t> src{4, 5, 6};
    const std::vector<std::int64_t> ext{4, static_cast<std::int64_t>(c.tgt_vocab_size), 6};
    ModelScorer copied(model, src, ext, 1);
    ModelScorer unk(model, src, ext, 1);
    CHECK(copied.vocab_size() == c.tgt_vocab_size + 1);
    copied.step({Vocabulary::kBos});
    unk.step({Vocabulary::kBos});
    const auto a = copied.step({static_cast<std::int64_t>(c.tgt_vocab_size)});
    const auto b = unk.step({Vocabulary::kUnk});
    CHECK(a == b);

    // A copy-heavy search still decodes; every fed token is either BOS or an
    // extended-space id, and the result maps back through the OOV list.
    ModelScorer inner(model, src, ext, 1);
    RecordingScorer rec(inner);
    const Hypothesis h = beam_search(rec, {4, 6, 0.0});
    CHECK(rec.fed.front() == Vocabulary::kBos);
    for (std::int64_t t : h.tokens) {
        CHECK(t < static_cast<std::int64_t>(c.tgt_vocab_size + 1));
    }
}

TEST_CASE("decode_example is independent of other examples") {
    ModelConfig c = fixtures::tiny_config(EncoderPosition::relative_directional, true);
    c.precision = Precision::standard32;
    const Model model(c, 9);
    std::vector<std::string> src_tokens{"w0", "w1", "w2", "w3", "w4", "w5", "w6", "w7"};
    std::vector<std::string> tgt_tokens{"w0", "w1", "w2", "w3", "w4", "w5"};
    const Vocabulary sv = Vocabulary::from_tokens(src_tokens);
    const Vocabulary tv = Vocabulary::from_tokens(tgt_tokens);
    const Example e1 = encode_with_copy({"w0", "zz", "w7"}, {"w1"}, sv, tv);
    const Example e2 = encode_with_copy({"w3", "w3", "yy", "qq"}, {"w2"}, sv, tv);
    const BeamConfig config{4, 6, 0.0};
    const Hypothesis alone = decode_example(model, e2, config, 400);
    decode_example(model, e1, config, 400);
    const Hypothesis after = decode_example(model, e2, config, 400);
    CHECK(alone.tokens == after.tokens);
    CHECK(alone.log_prob == after.log_prob);
    CHECK_NOTHROW(resolve_copies(alone, tv, e2.oov_list));
    // Truncating the source to two tokens decodes over the shorter memory.
    CHECK_NOTHROW(decode_example(model, e2, config, 2));
}
