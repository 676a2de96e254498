#pragma once

#include <cstddef>
#include <optional>

#include "codesum/numerics/ops.hpp"
#include "codesum/numerics/parameter.hpp"

namespace codesum {

/// Row of the relative table used for query i and key j: clip(j - i, k) + k
/// when directional, min(|j - i|, k) otherwise.
std::size_t relative_offset_index(std::size_t i, std::size_t j, std::size_t k, bool directional);

/// [n, m] table of relative_offset_index(i, j) for queries 0..n-1 placed at
/// `query_offset` + i and keys 0..m-1.
IndexTensor relative_index_grid(std::size_t n, std::size_t m, std::size_t k, bool directional,
                                std::size_t query_offset = 0);

/// Projections of one multi-head attention block. W^Q and W^K are
/// d_model x (h d_k), W^V is d_model x (h d_v), head i owning column block i;
/// W^O is (h d_v) x d_model.
struct AttentionWeights {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

AttentionWeights make_attention_weights(ParameterStore& store, const std::string& prefix, std::size_t d_model,
                                        std::size_t heads, std::size_t d_k, std::size_t d_v);

/// Learned relative representations w^K ((2k+1) x d_k) and optionally
/// w^V ((2k+1) x d_v), shared by the heads of one layer.
struct RelativeTable {
    Tensor key;
    Tensor value; ///< undefined when the value-side term is disabled
    std::size_t k = 0;
    bool directional = true;
};

RelativeTable make_relative_table(ParameterStore& store, const std::string& prefix, std::size_t k,
                                  bool directional, std::size_t d_k, std::size_t d_v, bool with_values);

struct AttentionShape {
    std::size_t heads = 1;
    std::size_t d_k = 1;
    std::size_t d_v = 1;
};

/// Dropout applied to attention weights; rate 0 or !training disables it.
struct DropoutSpec {
    double rate = 0.0;
    bool training = false;
    Rng* rng = nullptr;
};

/// Splits [B, n, h*d] into [B, h, n, d].
Tensor split_heads(const Tensor& x, std::size_t heads);
/// Inverse of split_heads.
Tensor merge_heads(const Tensor& x);

/// Scaled logits e_ij [B, h, n, m], including the relative key term.
Tensor attention_logits(const Tensor& q, const Tensor& k, const RelativeTable* rel, std::size_t query_offset = 0);

/// Attention core on already projected, head-split tensors:
/// q [B, h, n, d_k], k [B', h, m, d_k], v [B', h, m, d_v] (B' is B or 1).
/// Relative terms use `rel` with queries placed at `query_offset`. `mask`
/// broadcasts against the [B, h, n, m] logits. Returns [B, h, n, d_v].
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const RelativeTable* rel, const Mask* mask,
              const DropoutSpec& dropout, std::size_t query_offset = 0);

/// Head outputs o_i concatenated over heads, before W^O: [B, n, h*d_v].
/// x_q [B, n, d_model], x_kv [B, m, d_model]. `rel` is only legal when
/// `self_attention` is true; otherwise ContractError.
Tensor attention_heads(const Tensor& x_q, const Tensor& x_kv, const AttentionWeights& w, const AttentionShape& shape,
                       const RelativeTable* rel, const Mask* mask, const DropoutSpec& dropout,
                       bool self_attention);

/// attention_heads followed by the W^O projection: [B, n, d_model].
Tensor multi_head_attention(const Tensor& x_q, const Tensor& x_kv, const AttentionWeights& w,
                            const AttentionShape& shape, const RelativeTable* rel, const Mask* mask,
                            const DropoutSpec& dropout, bool self_attention);

/// x W + b over the last axis.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Key padding mask [B, 1, 1, S] from a row-major B x S keep grid.
Mask key_padding_mask(const std::vector<std::uint8_t>& keep, std::size_t batch, std::size_t src_len);
/// [B, 1, T, T] combining key padding and j <= i.
Mask causal_mask(const std::vector<std::uint8_t>& keep, std::size_t batch, std::size_t len);

} // namespace codesum
