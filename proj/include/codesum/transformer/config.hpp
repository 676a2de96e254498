#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "codesum/numerics/tensor.hpp"
#include "json.hpp"

namespace codesum {

enum class EncoderPosition { none, absolute, relative_directional, relative_undirected };
enum class DecoderPosition { none, absolute };

std::string to_string(EncoderPosition mode);
std::string to_string(DecoderPosition mode);
/// Throw ConfigError naming the accepted values.
EncoderPosition parse_encoder_position(const std::string& text);
DecoderPosition parse_decoder_position(const std::string& text);

inline bool is_relative(EncoderPosition mode) {
    return mode == EncoderPosition::relative_directional || mode == EncoderPosition::relative_undirected;
}

struct ModelConfig {
    std::size_t layers = 6;
    std::size_t heads = 8;
    std::size_t d_model = 512;
    std::size_t d_k = 64;
    std::size_t d_v = 64;
    std::size_t d_ff = 2048;
    /// Relative clipping distance.
    std::size_t clip = 16;
    /// Per encoder layer clipping distances; empty means `clip` everywhere.
    std::vector<std::size_t> layer_clip;
    EncoderPosition encoder_position = EncoderPosition::relative_directional;
    DecoderPosition decoder_position = DecoderPosition::absolute;
    bool use_copy = true;
    /// Value-side relative term a^V; the key-side term is always on in relative modes.
    bool relative_values = true;
    double dropout = 0.2;
    std::size_t src_vocab_size = 0;
    std::size_t tgt_vocab_size = 0;
    std::size_t max_positions = 512;
    Precision precision = Precision::standard32;

    /// Clipping distance of encoder layer `layer`.
    std::size_t clip_for_layer(std::size_t layer) const;

    /// Throws ConfigError listing every problem found. Zero layers is allowed
    /// as a diagnostic configuration.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

/// Absolute positions on both sides, no copy attention.
ModelConfig base_preset();
/// Directional relative encoder (k = 16), absolute decoder, copy attention.
ModelConfig full_preset();
/// Full preset with encoder layer i (from 0) clipped at 2^(i+1).
ModelConfig layerwise_preset();
/// "base", "full" or "layerwise"; ConfigError otherwise.
ModelConfig preset(const std::string& name);

void to_json(nlohmann::json& j, const ModelConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Stable hash of the canonical JSON form.
std::uint64_t config_hash(const ModelConfig& c);

/// Trainable scalars in the encoder and decoder stacks (attention with
/// biases, feed-forward, layer norms, relative tables), excluding
/// embeddings, position tables, output projection and copy layer.
std::size_t analytic_block_parameters(const ModelConfig& c);

} // namespace codesum
