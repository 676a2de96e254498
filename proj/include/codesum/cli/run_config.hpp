#pragma once

#include <string>
#include <vector>

#include "codesum/trainer/trainer.hpp"
#include "codesum/transformer/config.hpp"
#include "json.hpp"

namespace codesum::cli {

struct DataPaths {
    std::string train;
    std::string valid;
    std::string test; ///< optional
};

struct VocabConfig {
    std::size_t src_max = 50000;
    std::size_t tgt_max = 30000;
    std::size_t min_count = 1;
};

struct DecodeConfig {
    std::size_t beam_size = 4;
    std::size_t max_len = 30;
    double length_alpha = 0.0;
};

/// Everything one training run needs. `preset` is base, full, layerwise or
/// custom; the model section is applied on top of the preset.
struct RunConfig {
    std::string preset = "custom";
    ModelConfig model;
    TrainConfig train;
    DataPaths data;
    VocabConfig vocab;
    DecodeConfig decode;
    std::string output_dir;
};

nlohmann::json to_json(const RunConfig& c);

/// Sets `doc[a][b] = value` for an assignment "a.b=value". The value is read
/// as JSON when it parses, as a plain string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Expands the preset, applies overrides and validates everything. Problems
/// from every section, including each missing required key (preset,
/// data.train, data.valid, output_dir), are reported in one ConfigError.
/// Vocabulary sizes may still be zero; they are filled in once the
/// vocabularies exist.
RunConfig resolve_run_config(nlohmann::json doc, const std::vector<std::string>& overrides = {});

nlohmann::json read_json_file(const std::string& path);

} // namespace codesum::cli
