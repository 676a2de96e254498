#include "codesum/transformer/config.hpp"

#include <set>

#include "codesum/errors.hpp"
#include "codesum/numerics/rng.hpp"

namespace codesum {

std::string to_string(EncoderPosition mode) {
    switch (mode) {
    case EncoderPosition::none:
        return "none";
    case EncoderPosition::absolute:
        return "absolute";
    case EncoderPosition::relative_directional:
        return "relative_directional";
    case EncoderPosition::relative_undirected:
        return "relative_undirected";
    }
    return "?";
}

std::string to_string(DecoderPosition mode) { return mode == DecoderPosition::none ? "none" : "absolute"; }

EncoderPosition parse_encoder_position(const std::string& text) {
    for (auto mode : {EncoderPosition::none, EncoderPosition::absolute, EncoderPosition::relative_directional,
                      EncoderPosition::relative_undirected}) {
        if (to_string(mode) == text) {
            return mode;
        }
    }
    throw ConfigError("encoder_position '" + text +
                      "' is not one of none, absolute, relative_directional, relative_undirected");
}

DecoderPosition parse_decoder_position(const std::string& text) {
    if (text == "none") {
        return DecoderPosition::none;
    }
    if (text == "absolute") {
        return DecoderPosition::absolute;
    }
    throw ConfigError("decoder_position '" + text + "' is not one of none, absolute");
}

std::size_t ModelConfig::clip_for_layer(std::size_t layer) const {
    return layer_clip.empty() ? clip : layer_clip.at(layer);
}

void ModelConfig::validate() const {
    std::vector<std::string> problems;
    auto positive = [&](std::size_t v, const char* name) {
        if (v == 0) {
            problems.push_back(std::string(name) + " must be positive");
        }
    };
    positive(heads, "heads");
    positive(d_model, "d_model");
    positive(d_k, "d_k");
    positive(d_v, "d_v");
    positive(d_ff, "d_ff");
    positive(src_vocab_size, "src_vocab_size");
    positive(tgt_vocab_size, "tgt_vocab_size");
    positive(max_positions, "max_positions");
    if (is_relative(encoder_position)) {
        positive(clip, "clip");
        if (!layer_clip.empty() && layer_clip.size() != layers) {
            problems.push_back("layer_clip has " + std::to_string(layer_clip.size()) + " entries for " +
                               std::to_string(layers) + " layers");
        }
        for (std::size_t k : layer_clip) {
            positive(k, "every layer_clip entry");
        }
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        problems.push_back("dropout must lie in [0, 1)");
    }
    if (!problems.empty()) {
        std::string msg = "invalid model config:";
        for (const auto& p : problems) {
            msg += "\n  " + p;
        }
        throw ConfigError(msg);
    }
}

ModelConfig base_preset() {
    ModelConfig c;
    c.encoder_position = EncoderPosition::absolute;
    c.decoder_position = DecoderPosition::absolute;
    c.use_copy = false;
    return c;
}

ModelConfig full_preset() {
    ModelConfig c;
    c.encoder_position = EncoderPosition::relative_directional;
    c.clip = 16;
    c.decoder_position = DecoderPosition::absolute;
    c.use_copy = true;
    return c;
}

ModelConfig layerwise_preset() {
    ModelConfig c = full_preset();
    c.layer_clip.clear();
    for (std::size_t i = 0; i < c.layers; ++i) {
        c.layer_clip.push_back(std::size_t{2} << i);
    }
    return c;
}

ModelConfig preset(const std::string& name) {
    if (name == "base") {
        return base_preset();
    }
    if (name == "full") {
        return full_preset();
    }
    if (name == "layerwise") {
        return layerwise_preset();
    }
    throw ConfigError("unknown preset '" + name + "' (expected base, full or layerwise)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"layers", c.layers},
                       {"heads", c.heads},
                       {"d_model", c.d_model},
                       {"d_k", c.d_k},
                       {"d_v", c.d_v},
                       {"d_ff", c.d_ff},
                       {"clip", c.clip},
                       {"layer_clip", c.layer_clip},
                       {"encoder_position", to_string(c.encoder_position)},
                       {"decoder_position", to_string(c.decoder_position)},
                       {"use_copy", c.use_copy},
                       {"relative_values", c.relative_values},
                       {"dropout", c.dropout},
                       {"src_vocab_size", c.src_vocab_size},
                       {"tgt_vocab_size", c.tgt_vocab_size},
                       {"max_positions", c.max_positions},
                       {"precision", c.precision == Precision::standard32 ? "standard32" : "verify64"}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    if (!j.is_object()) {
        throw ConfigError("model config must be a JSON object");
    }
    static const std::set<std::string> known{"layers",         "heads",         "d_model",         "d_k",
                                             "d_v",            "d_ff",          "clip",            "layer_clip",
                                             "encoder_position", "decoder_position", "use_copy",   "relative_values",
                                             "dropout",        "src_vocab_size", "tgt_vocab_size", "max_positions",
                                             "precision"};
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw ConfigError("unknown model config key '" + key + "'");
        }
    }
    try {
        auto read = [&](const char* key, auto& field) {
            if (j.contains(key)) {
                j.at(key).get_to(field);
            }
        };
        read("layers", c.layers);
        read("heads", c.heads);
        read("d_model", c.d_model);
        read("d_k", c.d_k);
        read("d_v", c.d_v);
        read("d_ff", c.d_ff);
        read("clip", c.clip);
        read("layer_clip", c.layer_clip);
        read("use_copy", c.use_copy);
        read("relative_values", c.relative_values);
        read("dropout", c.dropout);
        read("src_vocab_size", c.src_vocab_size);
        read("tgt_vocab_size", c.tgt_vocab_size);
        read("max_positions", c.max_positions);
        if (j.contains("encoder_position")) {
            c.encoder_position = parse_encoder_position(j.at("encoder_position").get<std::string>());
        }
        if (j.contains("decoder_position")) {
            c.decoder_position = parse_decoder_position(j.at("decoder_position").get<std::string>());
        }
        if (j.contains("precision")) {
            const auto p = j.at("precision").get<std::string>();
            if (p != "standard32" && p != "verify64") {
                throw ConfigError("precision '" + p + "' is not one of standard32, verify64");
            }
            c.precision = p == "standard32" ? Precision::standard32 : Precision::verify64;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
}

std::uint64_t config_hash(const ModelConfig& c) { return hash_string(nlohmann::json(c).dump()); }

std::size_t analytic_block_parameters(const ModelConfig& c) {
    const std::size_t dm = c.d_model;
    const std::size_t hk = c.heads * c.d_k;
    const std::size_t hv = c.heads * c.d_v;
    // W^Q, W^K, W^V, W^O with their biases.
    const std::size_t attention = 2 * (dm * hk + hk) + (dm * hv + hv) + (hv * dm + dm);
    const std::size_t ffn = dm * c.d_ff + c.d_ff + c.d_ff * dm + dm;
    const std::size_t norm = 2 * dm;
    std::size_t total = 0;
    for (std::size_t i = 0; i < c.layers; ++i) {
        total += attention + ffn + 2 * norm;
        if (is_relative(c.encoder_position)) {
            const std::size_t rows = 2 * c.clip_for_layer(i) + 1;
            total += rows * c.d_k + (c.relative_values ? rows * c.d_v : 0);
        }
    }
    total += c.layers * (2 * attention + ffn + 3 * norm);
    return total;
}

} // namespace codesum
