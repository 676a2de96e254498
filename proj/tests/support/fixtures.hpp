#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "attention_oracle.hpp"
#include "codesum/corpus/batch.hpp"
#include "codesum/errors.hpp"
#include "codesum/transformer/model.hpp"

namespace fixtures {

using namespace codesum;

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        return INFINITY;
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

inline void randomize(const Tensor& t, Rng& rng, double scale = 1.0) {
    for (double& v : t.mutable_data()) {
        v = rng.normal() * scale;
    }
}

/// A random self-attention problem of at most six tokens.
struct AttentionCase {
    std::unique_ptr<ParameterStore> store;
    AttentionWeights w;
    std::optional<RelativeTable> rel;
    AttentionShape shape;
    std::size_t n = 0;
    std::size_t d_model = 0;
    Tensor x; // [1, n, d_model]
    std::vector<std::uint8_t> keep;
};

inline AttentionCase random_attention_case(std::uint64_t seed, EncoderPosition mode, bool padded = false) {
    Rng rng = Rng(seed).split("attention case");
    AttentionCase c;
    c.n = 1 + rng.below(6);
    c.shape.heads = 1 + rng.below(3);
    c.shape.d_k = 1 + rng.below(4);
    c.shape.d_v = 1 + rng.below(4);
    c.d_model = 2 + rng.below(5);
    c.store = std::make_unique<ParameterStore>(seed, Precision::verify64);
    c.w = make_attention_weights(*c.store, "att", c.d_model, c.shape.heads, c.shape.d_k, c.shape.d_v);
    for (const Tensor* b : {&c.w.bq, &c.w.bk, &c.w.bv, &c.w.bo}) {
        randomize(*b, rng, 0.5);
    }
    if (is_relative(mode)) {
        const std::size_t k = 1 + rng.below(4);
        c.rel = make_relative_table(*c.store, "att", k, mode == EncoderPosition::relative_directional, c.shape.d_k,
                                    c.shape.d_v, true);
        randomize(c.rel->key, rng);
        randomize(c.rel->value, rng);
    }
    std::vector<double> xs(c.n * c.d_model);
    for (double& v : xs) {
        v = rng.normal();
    }
    c.x = Tensor::from_data({1, c.n, c.d_model}, xs);
    c.keep.assign(c.n, 1);
    if (padded && c.n > 1) {
        // Mask a random non-empty suffix while keeping at least one token.
        const std::size_t real = 1 + rng.below(c.n - 1);
        std::fill(c.keep.begin() + static_cast<std::ptrdiff_t>(real), c.keep.end(), 0);
    }
    return c;
}

inline std::vector<double> oracle_heads(const AttentionCase& c) {
    const oracle::Projection q{c.w.wq.data(), c.w.bq.data(), c.d_model, c.shape.heads * c.shape.d_k};
    const oracle::Projection k{c.w.wk.data(), c.w.bk.data(), c.d_model, c.shape.heads * c.shape.d_k};
    const oracle::Projection v{c.w.wv.data(), c.w.bv.data(), c.d_model, c.shape.heads * c.shape.d_v};
    std::optional<oracle::RelativeSpec> rel;
    if (c.rel) {
        rel = oracle::RelativeSpec{c.rel->key.data(), c.rel->value.data(), c.rel->k, c.rel->directional};
    }
    return oracle::self_attention(c.x.data(), c.n, c.d_model, q, k, v, c.shape.heads, c.shape.d_k, c.shape.d_v,
                                  rel ? &*rel : nullptr, c.keep);
}

inline std::vector<double> oracle_multi_head(const AttentionCase& c) {
    const std::vector<double> heads = oracle_heads(c);
    const oracle::Projection o{c.w.wo.data(), c.w.bo.data(), c.shape.heads * c.shape.d_v, c.d_model};
    return oracle::project_rows(heads, c.n, o);
}

/// Largest deviation of attention_heads and multi_head_attention from the oracle.
inline double attention_oracle_error(const AttentionCase& c) {
    const Mask mask = key_padding_mask(c.keep, 1, c.n);
    const RelativeTable* rel = c.rel ? &*c.rel : nullptr;
    const Tensor heads = attention_heads(c.x, c.x, c.w, c.shape, rel, &mask, DropoutSpec{}, true);
    const Tensor full = multi_head_attention(c.x, c.x, c.w, c.shape, rel, &mask, DropoutSpec{}, true);
    return std::max(max_abs_diff(heads.data(), oracle_heads(c)), max_abs_diff(full.data(), oracle_multi_head(c)));
}

/// Small configuration for fast model tests.
inline ModelConfig tiny_config(EncoderPosition mode = EncoderPosition::relative_directional, bool copy = true) {
    ModelConfig c;
    c.layers = 2;
    c.heads = 2;
    c.d_model = 8;
    c.d_k = 4;
    c.d_v = 4;
    c.d_ff = 16;
    c.clip = 3;
    c.encoder_position = mode;
    c.decoder_position = DecoderPosition::absolute;
    c.use_copy = copy;
    c.dropout = 0.0;
    c.src_vocab_size = 12;
    c.tgt_vocab_size = 10;
    c.max_positions = 32;
    c.precision = Precision::verify64;
    return c;
}

/// Random batch of `rows` examples with ids in range and a few source OOVs.
inline Batch random_batch(const ModelConfig& c, std::size_t rows, std::uint64_t seed, std::size_t max_src = 6,
                          std::size_t max_tgt = 4) {
    Rng rng = Rng(seed).split("batch");
    std::vector<Example> exs;
    for (std::size_t r = 0; r < rows; ++r) {
        Example ex;
        const std::size_t s = 1 + rng.below(max_src);
        const std::size_t t = 1 + rng.below(max_tgt);
        std::size_t oov = 0;
        for (std::size_t j = 0; j < s; ++j) {
            ex.code_ids.push_back(static_cast<std::int64_t>(Vocabulary::kNumSpecials +
                                                            rng.below(c.src_vocab_size - Vocabulary::kNumSpecials)));
            if (rng.below(3) == 0) {
                ex.src_extended_ids.push_back(static_cast<std::int64_t>(c.tgt_vocab_size + oov));
                ex.oov_list.push_back("oov" + std::to_string(oov++));
            } else {
                ex.src_extended_ids.push_back(static_cast<std::int64_t>(
                    Vocabulary::kNumSpecials + rng.below(c.tgt_vocab_size - Vocabulary::kNumSpecials)));
            }
        }
        for (std::size_t j = 0; j < t; ++j) {
            const auto id = static_cast<std::int64_t>(Vocabulary::kNumSpecials +
                                                      rng.below(c.tgt_vocab_size - Vocabulary::kNumSpecials));
            ex.summary_ids.push_back(id);
            // Occasionally target a copied source token.
            ex.summary_extended_ids.push_back(rng.below(3) == 0 ? ex.src_extended_ids[rng.below(s)] : id);
        }
        ex.code_tokens.assign(s, "x");
        ex.summary_tokens.assign(t, "y");
        exs.push_back(std::move(ex));
    }
    return make_batch(exs, 400, 50);
}

/// Loss evaluated at a point where no ReLU input is within `margin` of its
/// kink, so central differences with a much smaller step see a smooth
/// function. Scans batch seeds upward from `seed`; returns the seed used.
inline std::uint64_t smooth_batch_seed(const Model& model, std::size_t rows, std::uint64_t seed, double margin,
                                       std::size_t max_src, std::size_t max_tgt) {
    for (std::uint64_t s = seed; s < seed + 5000; ++s) {
        const Batch batch = random_batch(model.config(), rows, s, max_src, max_tgt);
        NoGradGuard no_grad;
        ops::reset_relu_margin();
        Rng rng(77);
        model.loss(batch, ForwardMode{true, &rng});
        if (ops::relu_margin() >= margin) {
            return s;
        }
    }
    throw ContractError("no smooth evaluation point found");
}

} // namespace fixtures
