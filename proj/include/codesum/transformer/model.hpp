#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "codesum/corpus/batch.hpp"
#include "codesum/transformer/attention.hpp"
#include "codesum/transformer/config.hpp"

namespace codesum {

/// Training switches dropout on and draws its masks from `rng`.
struct ForwardMode {
    bool training = false;
    Rng* rng = nullptr;
};

/// Adds rows offset..offset+n-1 of `table` ([P, d]) to embedded [B, n, d].
/// Throws LengthError when offset + n exceeds the table.
Tensor add_absolute_positions(const Tensor& embedded, const Tensor& table, std::size_t offset = 0);

/// P_final = p_gen * [softmax(vocab_logits), 0...] + (1 - p_gen) * scatter(beta, src_extended_ids).
/// vocab_logits [B, T, V], beta [B', T, S], p_gen [B, T, 1], src_extended_ids of shape [B', 1, S]
/// (B' is B or 1). Result [B, T, V + max_oov]. Throws ContractError when a
/// source id does not fit V + max_oov.
Tensor copy_mixture(const Tensor& vocab_logits, const Tensor& beta, const Tensor& p_gen,
                    const IndexTensor& src_extended_ids, std::size_t max_oov);

/// Mean over weight-1 positions of -log max(P(target), 1e-12). Without copy,
/// targets at or beyond the vocabulary clamp to UNK first.
Tensor sequence_loss(const Tensor& probs, const std::vector<std::int64_t>& targets,
                     const std::vector<std::uint8_t>& mask, std::size_t vocab_size);

struct TokenAccuracy {
    std::size_t correct = 0;
    std::size_t total = 0;
    double rate() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

/// Encoder-decoder Transformer with optional relative encoder positions and
/// copy attention. Owns its parameters; not copyable.
class Model {
  public:
    struct EncoderLayer {
        AttentionWeights self;
        std::optional<RelativeTable> rel;
        Tensor ln1_gain, ln1_bias, w1, b1, w2, b2, ln2_gain, ln2_bias;
    };
    struct DecoderLayer {
        AttentionWeights self, cross;
        Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias, w1, b1, w2, b2, ln3_gain, ln3_bias;
    };
    struct CopyLayer {
        Tensor wq, wk, gate_w, gate_b;
    };
    /// Copy attention weights beta [B, T, S] and generation gate p_gen [B, T, 1].
    struct CopyParts {
        Tensor beta;
        Tensor p_gen;
    };

    Model(const ModelConfig& config, std::uint64_t seed);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;

    const ModelConfig& config() const { return config_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }
    const std::vector<EncoderLayer>& encoder_layers() const { return encoder_; }
    const std::vector<DecoderLayer>& decoder_layers() const { return decoder_; }
    const CopyLayer& copy_layer() const { return copy_; }

    /// Scalars in parameters named encoder.layer* or decoder.layer*.
    std::size_t block_parameter_count() const;

    /// Memory [B, S, d_model] for ids [B, S] with keep mask (row-major B x S).
    Tensor encode(const IndexTensor& src_ids, const std::vector<std::uint8_t>& src_keep, ForwardMode mode) const;
    /// Decoder states [B, T, d_model].
    Tensor decode(const IndexTensor& tgt_in, const std::vector<std::uint8_t>& tgt_keep, const Tensor& memory,
                  const std::vector<std::uint8_t>& src_keep, ForwardMode mode) const;

    Tensor vocab_logits(const Tensor& states) const;
    /// Memory may have batch 1 and broadcast over the state rows.
    CopyParts copy_parts(const Tensor& states, const Tensor& memory, const Mask& src_key_mask) const;
    /// Output distribution: the copy mixture with copy on, softmax over the
    /// target vocabulary otherwise. src_extended_ids has shape [B', 1, S].
    Tensor output_distribution(const Tensor& states, const Tensor& memory, const Mask& src_key_mask,
                               const IndexTensor& src_extended_ids, std::size_t max_oov) const;

    /// Teacher-forced output distribution for a batch, [B, T, V(+max_oov)].
    Tensor forward(const Batch& batch, ForwardMode mode) const;
    Tensor loss(const Batch& batch, ForwardMode mode) const;
    TokenAccuracy accuracy(const Batch& batch) const;

  private:
    Tensor embed(const Tensor& table, const IndexTensor& ids, const Tensor* positions, std::size_t offset,
                 ForwardMode mode) const;
    Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) const;
    Tensor residual(const Tensor& x, const Tensor& sub, const Tensor& gain, const Tensor& bias, ForwardMode mode) const;
    AttentionShape shape() const { return {config_.heads, config_.d_k, config_.d_v}; }
    DropoutSpec attention_dropout(ForwardMode mode) const { return {config_.dropout, mode.training, mode.rng}; }

    friend class IncrementalDecoder;

    ModelConfig config_;
    ParameterStore store_;
    Tensor src_embedding_, tgt_embedding_;
    Tensor encoder_positions_, decoder_positions_; // undefined unless absolute
    std::vector<EncoderLayer> encoder_;
    std::vector<DecoderLayer> decoder_;
    Tensor out_w_, out_b_;
    CopyLayer copy_;
};

/// Builds the index tensors and masks for one batch.
IndexTensor batch_src_ids(const Batch& batch);
IndexTensor batch_tgt_in(const Batch& batch);
/// [B, 1, S] extended ids, the layout copy_mixture expects.
IndexTensor batch_src_extended(const Batch& batch);

/// Step-by-step decoding of one source sequence over R parallel rows, with
/// cached self-attention keys and values. Runs without recording gradients.
class IncrementalDecoder {
  public:
    /// src_ids / src_extended_ids are one unpadded source sequence.
    IncrementalDecoder(const Model& model, const std::vector<std::int64_t>& src_ids,
                       const std::vector<std::int64_t>& src_extended_ids, std::size_t max_oov);

    /// Feeds one token per row (extended ids clamp to UNK) and returns the
    /// next-token distribution [R, V + max_oov]. The first call fixes R.
    Tensor step(const std::vector<std::int64_t>& tokens);
    /// Keeps rows `parents` (repeats allowed) of every cache, in that order.
    void reorder(const std::vector<std::size_t>& parents);

    std::size_t position() const { return position_; }
    std::size_t rows() const { return rows_; }
    std::size_t extended_vocab_size() const;
    /// Top decoder states of the last step, [R, 1, d_model].
    const Tensor& last_states() const { return last_states_; }

  private:
    const Model& model_;
    std::size_t max_oov_;
    Tensor memory_;
    Mask src_mask_;
    IndexTensor src_extended_;
    std::vector<Tensor> cross_k_, cross_v_;
    std::vector<Tensor> self_k_, self_v_;
    std::size_t position_ = 0;
    std::size_t rows_ = 0;
    Tensor last_states_;
};

} // namespace codesum
