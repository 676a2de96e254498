#include "codesum/transformer/model.hpp"

#include <cmath>

#include "codesum/errors.hpp"

namespace codesum {

Tensor add_absolute_positions(const Tensor& embedded, const Tensor& table, std::size_t offset) {
    const std::size_t n = embedded.dim(-2);
    if (offset + n > table.dim(0)) {
        throw LengthError("sequence of length " + std::to_string(offset + n) + " exceeds " +
                          std::to_string(table.dim(0)) + " absolute positions");
    }
    return ops::add(embedded, ops::slice(table, 0, offset, n));
}

Tensor copy_mixture(const Tensor& vocab_logits, const Tensor& beta, const Tensor& p_gen,
                    const IndexTensor& src_extended_ids, std::size_t max_oov) {
    const std::size_t V = vocab_logits.dim(-1);
    Tensor vocab = ops::softmax_lastdim(vocab_logits);
    if (max_oov > 0) {
        Shape pad_shape = vocab.shape();
        pad_shape.back() = max_oov;
        vocab = ops::concat({vocab, Tensor::zeros(pad_shape)}, -1);
    }
    const Tensor copied = ops::scatter_add_lastdim(beta, src_extended_ids, V + max_oov);
    return ops::add(ops::mul(p_gen, vocab), ops::mul(ops::affine(p_gen, -1.0, 1.0), copied));
}

Tensor sequence_loss(const Tensor& probs, const std::vector<std::int64_t>& targets,
                     const std::vector<std::uint8_t>& mask, std::size_t vocab_size) {
    IndexTensor t{{targets.size()}, targets};
    const bool extended = probs.dim(-1) > vocab_size;
    if (!extended) {
        for (std::int64_t& id : t.values) {
            if (id >= static_cast<std::int64_t>(vocab_size)) {
                id = Vocabulary::kUnk;
            }
        }
    }
    return ops::nll_from_probs(probs, t, std::vector<double>(mask.begin(), mask.end()));
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config), store_(seed, config.precision) {
    config_.validate();
    const ModelConfig& c = config_;
    const double embed_scale = 1.0 / std::sqrt(static_cast<double>(c.d_model));
    src_embedding_ = store_.create("src_embedding", {c.src_vocab_size, c.d_model}, Init::scaled_normal, embed_scale);
    tgt_embedding_ = store_.create("tgt_embedding", {c.tgt_vocab_size, c.d_model}, Init::scaled_normal, embed_scale);
    if (c.encoder_position == EncoderPosition::absolute) {
        encoder_positions_ =
            store_.create("encoder.positions", {c.max_positions, c.d_model}, Init::scaled_normal, embed_scale);
    }
    if (c.decoder_position == DecoderPosition::absolute) {
        decoder_positions_ =
            store_.create("decoder.positions", {c.max_positions, c.d_model}, Init::scaled_normal, embed_scale);
    }
    auto norm = [&](const std::string& name, Tensor& gain, Tensor& bias) {
        gain = store_.create(name + ".gain", {c.d_model}, Init::ones);
        bias = store_.create(name + ".bias", {c.d_model}, Init::zeros);
    };
    auto ffn = [&](const std::string& p, Tensor& w1, Tensor& b1, Tensor& w2, Tensor& b2) {
        w1 = store_.create(p + ".ffn.w1", {c.d_model, c.d_ff}, Init::glorot_uniform);
        b1 = store_.create(p + ".ffn.b1", {c.d_ff}, Init::zeros);
        w2 = store_.create(p + ".ffn.w2", {c.d_ff, c.d_model}, Init::glorot_uniform);
        b2 = store_.create(p + ".ffn.b2", {c.d_model}, Init::zeros);
    };
    for (std::size_t i = 0; i < c.layers; ++i) {
        const std::string p = "encoder.layer" + std::to_string(i);
        EncoderLayer L;
        L.self = make_attention_weights(store_, p + ".self", c.d_model, c.heads, c.d_k, c.d_v);
        if (is_relative(c.encoder_position)) {
            L.rel = make_relative_table(store_, p + ".self", c.clip_for_layer(i),
                                        c.encoder_position == EncoderPosition::relative_directional, c.d_k, c.d_v,
                                        c.relative_values);
        }
        norm(p + ".ln1", L.ln1_gain, L.ln1_bias);
        ffn(p, L.w1, L.b1, L.w2, L.b2);
        norm(p + ".ln2", L.ln2_gain, L.ln2_bias);
        encoder_.push_back(std::move(L));
    }
    for (std::size_t i = 0; i < c.layers; ++i) {
        const std::string p = "decoder.layer" + std::to_string(i);
        DecoderLayer L;
        L.self = make_attention_weights(store_, p + ".self", c.d_model, c.heads, c.d_k, c.d_v);
        norm(p + ".ln1", L.ln1_gain, L.ln1_bias);
        L.cross = make_attention_weights(store_, p + ".cross", c.d_model, c.heads, c.d_k, c.d_v);
        norm(p + ".ln2", L.ln2_gain, L.ln2_bias);
        ffn(p, L.w1, L.b1, L.w2, L.b2);
        norm(p + ".ln3", L.ln3_gain, L.ln3_bias);
        decoder_.push_back(std::move(L));
    }
    out_w_ = store_.create("output.w", {c.d_model, c.tgt_vocab_size}, Init::glorot_uniform);
    out_b_ = store_.create("output.b", {c.tgt_vocab_size}, Init::zeros);
    if (c.use_copy) {
        copy_.wq = store_.create("copy.wq", {c.d_model, c.d_model}, Init::glorot_uniform);
        copy_.wk = store_.create("copy.wk", {c.d_model, c.d_model}, Init::glorot_uniform);
        copy_.gate_w = store_.create("copy.gate.w", {2 * c.d_model, 1}, Init::glorot_uniform);
        copy_.gate_b = store_.create("copy.gate.b", {1}, Init::zeros);
    }
}

std::size_t Model::block_parameter_count() const {
    std::size_t n = 0;
    for (const Parameter& p : store_.all()) {
        if (p.name.starts_with("encoder.layer") || p.name.starts_with("decoder.layer")) {
            n += p.value.size();
        }
    }
    return n;
}

Tensor Model::embed(const Tensor& table, const IndexTensor& ids, const Tensor* positions, std::size_t offset,
                    ForwardMode mode) const {
    Tensor x = ops::embedding(table, ids);
    if (positions && positions->defined()) {
        x = add_absolute_positions(x, *positions, offset);
    }
    return mode.training ? ops::dropout(x, config_.dropout, true, *mode.rng) : x;
}

Tensor Model::feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                           const Tensor& b2) const {
    return linear(ops::relu(linear(x, w1, b1)), w2, b2);
}

Tensor Model::residual(const Tensor& x, const Tensor& sub, const Tensor& gain, const Tensor& bias,
                       ForwardMode mode) const {
    const Tensor dropped = mode.training ? ops::dropout(sub, config_.dropout, true, *mode.rng) : sub;
    return ops::layer_norm(ops::add(x, dropped), gain, bias);
}

Tensor Model::encode(const IndexTensor& src_ids, const std::vector<std::uint8_t>& src_keep, ForwardMode mode) const {
    if (src_ids.shape.size() != 2) {
        throw DimensionError("encode expects [B, S] ids, got " + shape_to_string(src_ids.shape));
    }
    if (mode.training && !mode.rng) {
        throw ContractError("training mode needs a dropout generator");
    }
    const std::size_t B = src_ids.shape[0];
    const std::size_t S = src_ids.shape[1];
    Tensor x = embed(src_embedding_, src_ids, &encoder_positions_, 0, mode);
    const Mask mask = key_padding_mask(src_keep, B, S);
    for (const EncoderLayer& L : encoder_) {
        const Tensor a = multi_head_attention(x, x, L.self, shape(), L.rel ? &*L.rel : nullptr, &mask,
                                              attention_dropout(mode), true);
        x = residual(x, a, L.ln1_gain, L.ln1_bias, mode);
        x = residual(x, feed_forward(x, L.w1, L.b1, L.w2, L.b2), L.ln2_gain, L.ln2_bias, mode);
    }
    return x;
}

Tensor Model::decode(const IndexTensor& tgt_in, const std::vector<std::uint8_t>& tgt_keep, const Tensor& memory,
                     const std::vector<std::uint8_t>& src_keep, ForwardMode mode) const {
    if (tgt_in.shape.size() != 2) {
        throw DimensionError("decode expects [B, T] ids, got " + shape_to_string(tgt_in.shape));
    }
    if (mode.training && !mode.rng) {
        throw ContractError("training mode needs a dropout generator");
    }
    const std::size_t B = tgt_in.shape[0];
    const std::size_t T = tgt_in.shape[1];
    Tensor x = embed(tgt_embedding_, tgt_in, &decoder_positions_, 0, mode);
    const Mask self_mask = causal_mask(tgt_keep, B, T);
    const Mask cross_mask = key_padding_mask(src_keep, memory.dim(0), memory.dim(1));
    for (const DecoderLayer& L : decoder_) {
        const Tensor s = multi_head_attention(x, x, L.self, shape(), nullptr, &self_mask, attention_dropout(mode), true);
        x = residual(x, s, L.ln1_gain, L.ln1_bias, mode);
        const Tensor c =
            multi_head_attention(x, memory, L.cross, shape(), nullptr, &cross_mask, attention_dropout(mode), false);
        x = residual(x, c, L.ln2_gain, L.ln2_bias, mode);
        x = residual(x, feed_forward(x, L.w1, L.b1, L.w2, L.b2), L.ln3_gain, L.ln3_bias, mode);
    }
    return x;
}

Tensor Model::vocab_logits(const Tensor& states) const { return linear(states, out_w_, out_b_); }

Model::CopyParts Model::copy_parts(const Tensor& states, const Tensor& memory, const Mask& src_key_mask) const {
    if (!config_.use_copy) {
        throw ContractError("copy_parts on a model without copy attention");
    }
    const Tensor q = ops::matmul(states, copy_.wq);
    const Tensor k = ops::matmul(memory, copy_.wk);
    const double scale = 1.0 / std::sqrt(static_cast<double>(config_.d_model));
    const Tensor scores = ops::affine(ops::matmul(q, ops::transpose_last2(k)), scale);
    CopyParts parts;
    parts.beta = ops::softmax_lastdim(scores, &src_key_mask);
    const Tensor context = ops::matmul(parts.beta, memory);
    parts.p_gen = ops::sigmoid(linear(ops::concat({states, context}, -1), copy_.gate_w, copy_.gate_b));
    return parts;
}

Tensor Model::output_distribution(const Tensor& states, const Tensor& memory, const Mask& src_key_mask,
                                  const IndexTensor& src_extended_ids, std::size_t max_oov) const {
    const Tensor logits = vocab_logits(states);
    if (!config_.use_copy) {
        return ops::softmax_lastdim(logits);
    }
    const CopyParts parts = copy_parts(states, memory, src_key_mask);
    return copy_mixture(logits, parts.beta, parts.p_gen, src_extended_ids, max_oov);
}

IndexTensor batch_src_ids(const Batch& batch) { return {{batch.batch_size, batch.src_len}, batch.src_ids}; }

IndexTensor batch_tgt_in(const Batch& batch) { return {{batch.batch_size, batch.tgt_len}, batch.tgt_in_ids}; }

IndexTensor batch_src_extended(const Batch& batch) {
    return {{batch.batch_size, 1, batch.src_len}, batch.src_extended_ids};
}

Tensor Model::forward(const Batch& batch, ForwardMode mode) const {
    const Tensor memory = encode(batch_src_ids(batch), batch.src_mask, mode);
    const Tensor states = decode(batch_tgt_in(batch), batch.tgt_mask, memory, batch.src_mask, mode);
    const Mask copy_mask{{batch.batch_size, 1, batch.src_len}, batch.src_mask};
    return output_distribution(states, memory, copy_mask, batch_src_extended(batch), batch.max_oov);
}

Tensor Model::loss(const Batch& batch, ForwardMode mode) const {
    return sequence_loss(forward(batch, mode), batch.tgt_out_extended_ids, batch.tgt_mask, config_.tgt_vocab_size);
}

TokenAccuracy Model::accuracy(const Batch& batch) const {
    NoGradGuard no_grad;
    const Tensor probs = forward(batch, ForwardMode{});
    const std::size_t C = probs.dim(-1);
    const auto p = probs.data();
    TokenAccuracy acc;
    for (std::size_t pos = 0; pos < batch.tgt_mask.size(); ++pos) {
        if (!batch.tgt_mask[pos]) {
            continue;
        }
        std::int64_t target = batch.tgt_out_extended_ids[pos];
        if (target >= static_cast<std::int64_t>(C)) {
            target = Vocabulary::kUnk;
        }
        std::size_t best = 0;
        for (std::size_t w = 1; w < C; ++w) {
            if (p[pos * C + w] > p[pos * C + best]) {
                best = w;
            }
        }
        acc.correct += static_cast<std::int64_t>(best) == target ? 1 : 0;
        ++acc.total;
    }
    return acc;
}

IncrementalDecoder::IncrementalDecoder(const Model& model, const std::vector<std::int64_t>& src_ids,
                                       const std::vector<std::int64_t>& src_extended_ids, std::size_t max_oov)
    : model_(model), max_oov_(max_oov) {
    const std::size_t S = src_ids.size();
    if (S == 0) {
        throw LengthError("cannot decode an empty source sequence");
    }
    if (src_extended_ids.size() != S) {
        throw DimensionError("source ids and extended ids differ in length");
    }
    NoGradGuard no_grad;
    const std::vector<std::uint8_t> keep(S, 1);
    memory_ = model.encode({{1, S}, src_ids}, keep, ForwardMode{});
    src_mask_ = Mask{{1, 1, S}, keep};
    src_extended_ = IndexTensor{{1, 1, S}, src_extended_ids};
    const std::size_t h = model.config().heads;
    for (const Model::DecoderLayer& L : model.decoder_layers()) {
        cross_k_.push_back(split_heads(linear(memory_, L.cross.wk, L.cross.bk), h));
        cross_v_.push_back(split_heads(linear(memory_, L.cross.wv, L.cross.bv), h));
    }
    self_k_.resize(model.decoder_layers().size());
    self_v_.resize(model.decoder_layers().size());
}

std::size_t IncrementalDecoder::extended_vocab_size() const {
    return model_.config().tgt_vocab_size + (model_.config().use_copy ? max_oov_ : 0);
}

Tensor IncrementalDecoder::step(const std::vector<std::int64_t>& tokens) {
    if (position_ == 0) {
        rows_ = tokens.size();
    }
    if (tokens.size() != rows_ || rows_ == 0) {
        throw DimensionError("step got " + std::to_string(tokens.size()) + " tokens for " + std::to_string(rows_) +
                             " rows");
    }
    NoGradGuard no_grad;
    const ModelConfig& c = model_.config();
    IndexTensor ids{{rows_, 1}, tokens};
    for (std::int64_t& id : ids.values) {
        if (id >= static_cast<std::int64_t>(c.tgt_vocab_size)) {
            id = Vocabulary::kUnk;
        }
    }
    const DropoutSpec no_dropout;
    const std::size_t h = c.heads;
    const Mask cross_mask{{1, 1, 1, src_mask_.shape.back()}, src_mask_.keep};
    Tensor x = model_.embed(model_.tgt_embedding_, ids, &model_.decoder_positions_, position_, ForwardMode{});
    for (std::size_t l = 0; l < model_.decoder_.size(); ++l) {
        const Model::DecoderLayer& L = model_.decoder_[l];
        const Tensor q = split_heads(linear(x, L.self.wq, L.self.bq), h);
        const Tensor k = split_heads(linear(x, L.self.wk, L.self.bk), h);
        const Tensor v = split_heads(linear(x, L.self.wv, L.self.bv), h);
        self_k_[l] = position_ == 0 ? k : ops::concat({self_k_[l], k}, 2);
        self_v_[l] = position_ == 0 ? v : ops::concat({self_v_[l], v}, 2);
        const Tensor s = linear(merge_heads(attend(q, self_k_[l], self_v_[l], nullptr, nullptr, no_dropout)),
                                L.self.wo, L.self.bo);
        x = model_.residual(x, s, L.ln1_gain, L.ln1_bias, ForwardMode{});
        const Tensor cq = split_heads(linear(x, L.cross.wq, L.cross.bq), h);
        const Tensor cr = linear(merge_heads(attend(cq, cross_k_[l], cross_v_[l], nullptr, &cross_mask, no_dropout)),
                                 L.cross.wo, L.cross.bo);
        x = model_.residual(x, cr, L.ln2_gain, L.ln2_bias, ForwardMode{});
        x = model_.residual(x, model_.feed_forward(x, L.w1, L.b1, L.w2, L.b2), L.ln3_gain, L.ln3_bias,
                            ForwardMode{});
    }
    last_states_ = x;
    ++position_;
    const Tensor probs = model_.output_distribution(x, memory_, src_mask_, src_extended_, max_oov_);
    return ops::reshape(probs, {rows_, probs.dim(-1)});
}

void IncrementalDecoder::reorder(const std::vector<std::size_t>& parents) {
    if (parents.empty()) {
        throw ContractError("reorder needs at least one row");
    }
    NoGradGuard no_grad;
    for (std::size_t l = 0; l < self_k_.size(); ++l) {
        if (self_k_[l].defined()) {
            self_k_[l] = ops::index_select0(self_k_[l], parents);
            self_v_[l] = ops::index_select0(self_v_[l], parents);
        }
    }
    if (last_states_.defined()) {
        last_states_ = ops::index_select0(last_states_, parents);
    }
    rows_ = parents.size();
}

} // namespace codesum
