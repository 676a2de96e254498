#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "codesum/corpus/example.hpp"
#include "codesum/transformer/model.hpp"
#include "json.hpp"

namespace codesum {

enum class ValidationMetric { loss, bleu };
std::string to_string(ValidationMetric m);
ValidationMetric parse_validation_metric(const std::string& text);

struct TrainConfig {
    double lr = 1e-4;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 200;
    std::size_t patience = 20;
    std::string patience_unit = "epoch";
    std::uint64_t seed = 2020;
    std::optional<double> grad_clip_norm = 5.0;
    ValidationMetric validation_metric = ValidationMetric::loss;
    std::size_t max_src_len = 400;
    std::size_t max_tgt_len = 50;
    /// Beam width and length cap used when validating by BLEU.
    std::size_t valid_beam = 1;
    std::size_t valid_max_len = 50;

    /// ConfigError listing every violated constraint.
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
    std::size_t epoch = 0; ///< 1-based
    double train_loss = 0.0;
    double val_metric = 0.0;
    double val_accuracy = 0.0;
    double seconds = 0.0;
    bool improved = false;
    bool stopped_early = false;
};

nlohmann::json to_json(const EpochRecord& r);
EpochRecord epoch_record_from_json(const nlohmann::json& j);

struct TrainState {
    std::size_t epoch = 0; ///< epochs completed
    std::optional<double> best_metric;
    std::size_t epochs_since_improvement = 0;
    /// Root generator of the run, Rng(seed). Shuffles and dropout masks use
    /// streams split from it per epoch and batch, so resuming needs no other
    /// random state.
    Rng::State rng_state;
    std::vector<EpochRecord> history;
};

nlohmann::json to_json(const TrainState& s);
TrainState train_state_from_json(const nlohmann::json& j);

enum class StopDecision { proceed, stop };

/// Records `metric` for one epoch. Loss improves when strictly lower, BLEU
/// when strictly higher; the first metric always improves.
StopDecision early_stop_update(TrainState& state, double metric, ValidationMetric orientation, std::size_t patience);

/// forward, loss, backward, optional global-norm clip, Adam. Returns the loss
/// before the update. A non-finite loss raises NumericError naming the batch
/// and the largest parameter norms.
double train_step(Model& model, const Batch& batch, const TrainConfig& config, Rng& dropout_rng,
                  std::size_t batch_id = 0);

struct Evaluation {
    double loss = 0.0; ///< token-weighted teacher-forced loss
    TokenAccuracy accuracy;
};

/// Teacher-forced loss and token accuracy without dropout or gradients.
Evaluation evaluate_teacher_forced(const Model& model, std::span<const Example> examples, const TrainConfig& config);

/// Corpus BLEU of decoded summaries against the examples' summary tokens.
double evaluate_bleu(const Model& model, std::span<const Example> examples, const Vocabulary& tgt_vocab,
                     const TrainConfig& config);

struct FitOptions {
    /// When set, receives best.ckpt, last.ckpt and train_log.jsonl.
    std::optional<std::filesystem::path> out_dir;
    /// Continue from out_dir/last.ckpt.
    bool resume = false;
    /// Needed for BLEU validation.
    const Vocabulary* tgt_vocab = nullptr;
    /// Stop after this many epochs in this call, even if training would go on.
    std::optional<std::size_t> epoch_limit;
    /// Extra entries stored in every checkpoint's metadata.
    nlohmann::json metadata = nlohmann::json::object();
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Runs epochs until early stopping or max_epochs and returns the final state.
TrainState fit(Model& model, std::span<const Example> train, std::span<const Example> valid,
               const TrainConfig& config, const FitOptions& options = {});

/// One epoch over `train`: the seeded bucketed plan, one step per batch.
/// Returns the token-weighted mean training loss.
double train_epoch(Model& model, std::span<const Example> train, const TrainConfig& config, std::size_t epoch);

} // namespace codesum
