#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "codesum/cli/run_config.hpp"
#include "codesum/metrics/metrics.hpp"

namespace codesum::cli {

struct TrainOutcome {
    RunConfig config; ///< with vocabulary sizes filled in
    TrainState state;
    std::filesystem::path dir;
};

/// Reads and encodes the data, writes config.resolved.json and both
/// vocabularies into the output directory, then trains. Nothing is written
/// unless the data files load.
TrainOutcome run_training(const RunConfig& rc, std::ostream& log, bool resume = false);

/// A trained run loaded back from its directory.
struct LoadedRun {
    RunConfig config;
    Vocabulary src_vocab, tgt_vocab;
    std::unique_ptr<Model> model;
};

/// Loads config.resolved.json, the vocabularies and a checkpoint (best.ckpt
/// unless given). Refuses vocabularies whose fingerprints differ from the
/// ones recorded in the checkpoint.
LoadedRun load_run(const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& checkpoint = {});

struct SummarizeOptions {
    std::size_t beam_size = 4;
    std::size_t max_len = 30;
    double length_alpha = 0.0;
    bool greedy = false;
};

/// One summary per code line, tokens joined by spaces; an empty line gives
/// an empty summary.
std::vector<std::string> summarize_lines(const LoadedRun& run, const std::vector<std::string>& code_lines,
                                         const SummarizeOptions& options);

/// Reports on whitespace-tokenized line files. Throws FormatError when the
/// line counts differ.
MetricReport evaluate_files(const std::filesystem::path& hyps, const std::filesystem::path& refs);

/// One ablation cell: axis assignments and the config they produce.
struct AblationCell {
    std::vector<std::pair<std::string, nlohmann::json>> assignments;
    RunConfig config;
};

/// Built-in grids "table3", "table4", "table5", or a JSON file with either
/// {"axes": {...}} or {"sweeps": [{...}, ...]}. Each sweep is the product of
/// its axes; sweeps are concatenated and cells with identical model configs
/// kept once. Axes: encoder_position, decoder_position, source_absolute,
/// target_absolute, k (integer or "2^i"), directional, use_copy, d_model
/// (d_ff follows as 4 d_model), layers. Cell i trains with seed base ^ i.
std::vector<AblationCell> expand_grid(const std::string& grid, const RunConfig& base);

std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Entry point shared by the codesum tool and the tests. Exit codes: 0 ok,
/// 1 runtime failure, 2 invalid configuration or usage.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace codesum::cli
