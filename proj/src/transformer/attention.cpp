#include "codesum/transformer/attention.hpp"

#include <cmath>
#include <cstdlib>

#include "codesum/errors.hpp"

namespace codesum {

std::size_t relative_offset_index(std::size_t i, std::size_t j, std::size_t k, bool directional) {
    const auto diff = static_cast<std::int64_t>(j) - static_cast<std::int64_t>(i);
    const auto kk = static_cast<std::int64_t>(k);
    if (directional) {
        return static_cast<std::size_t>(std::clamp(diff, -kk, kk) + kk);
    }
    return static_cast<std::size_t>(std::min(std::abs(diff), kk));
}

IndexTensor relative_index_grid(std::size_t n, std::size_t m, std::size_t k, bool directional,
                                std::size_t query_offset) {
    IndexTensor grid{{n, m}, std::vector<std::int64_t>(n * m)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            grid.values[i * m + j] = static_cast<std::int64_t>(relative_offset_index(query_offset + i, j, k, directional));
        }
    }
    return grid;
}

AttentionWeights make_attention_weights(ParameterStore& store, const std::string& prefix, std::size_t d_model,
                                        std::size_t heads, std::size_t d_k, std::size_t d_v) {
    AttentionWeights w;
    w.wq = store.create(prefix + ".wq", {d_model, heads * d_k}, Init::glorot_uniform);
    w.bq = store.create(prefix + ".bq", {heads * d_k}, Init::zeros);
    w.wk = store.create(prefix + ".wk", {d_model, heads * d_k}, Init::glorot_uniform);
    w.bk = store.create(prefix + ".bk", {heads * d_k}, Init::zeros);
    w.wv = store.create(prefix + ".wv", {d_model, heads * d_v}, Init::glorot_uniform);
    w.bv = store.create(prefix + ".bv", {heads * d_v}, Init::zeros);
    w.wo = store.create(prefix + ".wo", {heads * d_v, d_model}, Init::glorot_uniform);
    w.bo = store.create(prefix + ".bo", {d_model}, Init::zeros);
    return w;
}

RelativeTable make_relative_table(ParameterStore& store, const std::string& prefix, std::size_t k,
                                  bool directional, std::size_t d_k, std::size_t d_v, bool with_values) {
    RelativeTable t;
    t.k = k;
    t.directional = directional;
    t.key = store.create(prefix + ".rel_key", {2 * k + 1, d_k}, Init::glorot_uniform);
    if (with_values) {
        t.value = store.create(prefix + ".rel_value", {2 * k + 1, d_v}, Init::glorot_uniform);
    }
    return t;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return ops::add(ops::matmul(x, w), b); }

Tensor split_heads(const Tensor& x, std::size_t heads) {
    const std::size_t B = x.dim(0);
    const std::size_t n = x.dim(1);
    const std::size_t d = x.dim(2) / heads;
    return ops::permute(ops::reshape(x, {B, n, heads, d}), {0, 2, 1, 3});
}

Tensor merge_heads(const Tensor& x) {
    const std::size_t B = x.dim(0);
    const std::size_t h = x.dim(1);
    const std::size_t n = x.dim(2);
    const std::size_t d = x.dim(3);
    return ops::reshape(ops::permute(x, {0, 2, 1, 3}), {B, n, h * d});
}

Tensor attention_logits(const Tensor& q, const Tensor& k, const RelativeTable* rel, std::size_t query_offset) {
    const std::size_t n = q.dim(2);
    const std::size_t m = k.dim(2);
    if (n == 0 || m == 0) {
        throw LengthError("attention over an empty sequence");
    }
    Tensor logits = ops::matmul(q, ops::transpose_last2(k));
    if (rel) {
        // q_i . a_ij^K as a lookup into q_i . w^K for every table row.
        const Tensor q_rows = ops::matmul(q, ops::transpose_last2(rel->key));
        logits = ops::add(logits, ops::gather_lastdim(q_rows, relative_index_grid(n, m, rel->k, rel->directional,
                                                                                   query_offset)));
    }
    return ops::affine(logits, 1.0 / std::sqrt(static_cast<double>(q.dim(3))));
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const RelativeTable* rel, const Mask* mask,
              const DropoutSpec& dropout, std::size_t query_offset) {
    Tensor alpha = ops::softmax_lastdim(attention_logits(q, k, rel, query_offset), mask);
    if (dropout.training && dropout.rate > 0.0) {
        alpha = ops::dropout(alpha, dropout.rate, true, *dropout.rng);
    }
    Tensor out = ops::matmul(alpha, v);
    if (rel && rel->value.defined()) {
        // sum_j alpha_ij a_ij^V: bucket the weights by table row first.
        const IndexTensor grid = relative_index_grid(q.dim(2), k.dim(2), rel->k, rel->directional, query_offset);
        const Tensor per_row = ops::scatter_add_lastdim(alpha, grid, rel->value.dim(0));
        out = ops::add(out, ops::matmul(per_row, rel->value));
    }
    return out;
}

Tensor attention_heads(const Tensor& x_q, const Tensor& x_kv, const AttentionWeights& w, const AttentionShape& shape,
                       const RelativeTable* rel, const Mask* mask, const DropoutSpec& dropout,
                       bool self_attention) {
    if (rel && !self_attention) {
        throw ContractError("relative position tables are only defined for self-attention");
    }
    const Tensor q = split_heads(linear(x_q, w.wq, w.bq), shape.heads);
    const Tensor k = split_heads(linear(x_kv, w.wk, w.bk), shape.heads);
    const Tensor v = split_heads(linear(x_kv, w.wv, w.bv), shape.heads);
    return merge_heads(attend(q, k, v, rel, mask, dropout));
}

Tensor multi_head_attention(const Tensor& x_q, const Tensor& x_kv, const AttentionWeights& w,
                            const AttentionShape& shape, const RelativeTable* rel, const Mask* mask,
                            const DropoutSpec& dropout, bool self_attention) {
    return linear(attention_heads(x_q, x_kv, w, shape, rel, mask, dropout, self_attention), w.wo, w.bo);
}

Mask key_padding_mask(const std::vector<std::uint8_t>& keep, std::size_t batch, std::size_t src_len) {
    if (keep.size() != batch * src_len) {
        throw DimensionError("key padding mask: " + std::to_string(keep.size()) + " entries for " +
                             std::to_string(batch) + " x " + std::to_string(src_len));
    }
    return Mask{{batch, 1, 1, src_len}, keep};
}

Mask causal_mask(const std::vector<std::uint8_t>& keep, std::size_t batch, std::size_t len) {
    if (keep.size() != batch * len) {
        throw DimensionError("causal mask: " + std::to_string(keep.size()) + " entries for " +
                             std::to_string(batch) + " x " + std::to_string(len));
    }
    Mask mask{{batch, 1, len, len}, std::vector<std::uint8_t>(batch * len * len, 0)};
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < len; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                mask.keep[(b * len + i) * len + j] = keep[b * len + j];
            }
        }
    }
    return mask;
}

} // namespace codesum
