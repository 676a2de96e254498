#include "codesum/trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "codesum/decoding/beam.hpp"
#include "codesum/errors.hpp"
#include "codesum/metrics/metrics.hpp"
#include "codesum/numerics/adam.hpp"
#include "codesum/transformer/checkpoint.hpp"

namespace codesum {

namespace {

const char* const kTrainKeys[] = {"lr",          "batch_size",  "max_epochs",  "patience",   "patience_unit",
                                  "seed",        "grad_clip_norm", "validation_metric", "max_src_len",
                                  "max_tgt_len", "valid_beam",  "valid_max_len"};

Rng train_root(std::uint64_t seed) { return Rng(seed).split("train"); }

/// Batch over `indices`, or nothing when every example has an empty source.
std::optional<Batch> batch_of(std::span<const Example> examples, std::span<const std::size_t> indices,
                              const TrainConfig& config) {
    std::vector<Example> rows;
    rows.reserve(indices.size());
    for (std::size_t i : indices) {
        if (!examples[i].code_ids.empty()) {
            rows.push_back(examples[i]);
        }
    }
    if (rows.empty()) {
        return std::nullopt;
    }
    return make_batch(rows, config.max_src_len, config.max_tgt_len);
}

std::size_t target_tokens(const Batch& b) {
    return static_cast<std::size_t>(std::count(b.tgt_mask.begin(), b.tgt_mask.end(), 1));
}

std::string norm_report(const Model& model) {
    std::vector<std::pair<double, std::string>> norms;
    for (const Parameter& p : model.params().all()) {
        double s = 0.0;
        for (double v : p.value.data()) {
            s += v * v;
        }
        norms.emplace_back(std::sqrt(s), p.name);
    }
    std::sort(norms.begin(), norms.end(), std::greater<>());
    std::ostringstream out;
    for (std::size_t i = 0; i < std::min<std::size_t>(3, norms.size()); ++i) {
        out << (i ? ", " : "") << norms[i].second << "=" << norms[i].first;
    }
    return out.str();
}

void write_log(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path, std::ios::trunc);
    for (const EpochRecord& r : history) {
        out << to_json(r).dump() << '\n';
    }
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
}

void append_log(const std::filesystem::path& path, const EpochRecord& r) {
    std::ofstream out(path, std::ios::app);
    out << to_json(r).dump() << '\n';
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
}

} // namespace

std::string to_string(ValidationMetric m) { return m == ValidationMetric::loss ? "loss" : "bleu"; }

ValidationMetric parse_validation_metric(const std::string& text) {
    if (text == "loss") {
        return ValidationMetric::loss;
    }
    if (text == "bleu") {
        return ValidationMetric::bleu;
    }
    throw ConfigError("validation_metric must be loss or bleu, got '" + text + "'");
}

void TrainConfig::validate() const {
    std::vector<std::string> problems;
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
        problems.push_back("lr must be a finite value >= 0");
    }
    if (batch_size < 1) {
        problems.push_back("batch_size must be at least 1");
    }
    if (max_epochs < 1) {
        problems.push_back("max_epochs must be at least 1");
    }
    if (patience < 1 || patience >= max_epochs) {
        problems.push_back("patience must be in [1, max_epochs)");
    }
    if (patience_unit != "epoch") {
        problems.push_back("patience_unit must be 'epoch'");
    }
    if (grad_clip_norm && !(*grad_clip_norm > 0.0)) {
        problems.push_back("grad_clip_norm must be positive or null");
    }
    if (max_src_len < 1 || max_tgt_len < 1) {
        problems.push_back("max_src_len and max_tgt_len must be at least 1");
    }
    if (valid_beam < 1 || valid_max_len < 1) {
        problems.push_back("valid_beam and valid_max_len must be at least 1");
    }
    if (!problems.empty()) {
        std::string msg = "invalid training config:";
        for (const std::string& p : problems) {
            msg += "\n  " + p;
        }
        throw ConfigError(msg);
    }
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"patience_unit", c.patience_unit},
            {"seed", c.seed},
            {"grad_clip_norm", c.grad_clip_norm ? nlohmann::json(*c.grad_clip_norm) : nlohmann::json(nullptr)},
            {"validation_metric", to_string(c.validation_metric)},
            {"max_src_len", c.max_src_len},
            {"max_tgt_len", c.max_tgt_len},
            {"valid_beam", c.valid_beam},
            {"valid_max_len", c.valid_max_len}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError("training config must be a JSON object");
    }
    for (const auto& item : j.items()) {
        if (std::find(std::begin(kTrainKeys), std::end(kTrainKeys), item.key()) == std::end(kTrainKeys)) {
            throw ConfigError("unknown training config key '" + item.key() + "'");
        }
    }
    TrainConfig c;
    try {
        c.lr = j.value("lr", c.lr);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.patience = j.value("patience", c.patience);
        c.patience_unit = j.value("patience_unit", c.patience_unit);
        c.seed = j.value("seed", c.seed);
        if (j.contains("grad_clip_norm")) {
            const auto& g = j.at("grad_clip_norm");
            c.grad_clip_norm = g.is_null() ? std::nullopt : std::optional<double>(g.get<double>());
        }
        if (j.contains("validation_metric")) {
            c.validation_metric = parse_validation_metric(j.at("validation_metric").get<std::string>());
        }
        c.max_src_len = j.value("max_src_len", c.max_src_len);
        c.max_tgt_len = j.value("max_tgt_len", c.max_tgt_len);
        c.valid_beam = j.value("valid_beam", c.valid_beam);
        c.valid_max_len = j.value("valid_max_len", c.valid_max_len);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("training config: ") + e.what());
    }
    return c;
}

nlohmann::json to_json(const EpochRecord& r) {
    return {{"epoch", r.epoch},       {"train_loss", r.train_loss}, {"val_metric", r.val_metric},
            {"val_accuracy", r.val_accuracy}, {"seconds", r.seconds}, {"improved", r.improved},
            {"stopped_early", r.stopped_early}};
}

EpochRecord epoch_record_from_json(const nlohmann::json& j) {
    EpochRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.train_loss = j.at("train_loss").get<double>();
    r.val_metric = j.at("val_metric").get<double>();
    r.val_accuracy = j.at("val_accuracy").get<double>();
    r.seconds = j.at("seconds").get<double>();
    r.improved = j.at("improved").get<bool>();
    r.stopped_early = j.at("stopped_early").get<bool>();
    return r;
}

nlohmann::json to_json(const TrainState& s) {
    nlohmann::json history = nlohmann::json::array();
    for (const EpochRecord& r : s.history) {
        history.push_back(to_json(r));
    }
    return {{"epoch", s.epoch},
            {"best_metric", s.best_metric ? nlohmann::json(*s.best_metric) : nlohmann::json(nullptr)},
            {"epochs_since_improvement", s.epochs_since_improvement},
            {"rng_key", s.rng_state.key},
            {"rng_counter", s.rng_state.counter},
            {"history", history}};
}

TrainState train_state_from_json(const nlohmann::json& j) {
    try {
        TrainState s;
        s.epoch = j.at("epoch").get<std::size_t>();
        if (!j.at("best_metric").is_null()) {
            s.best_metric = j.at("best_metric").get<double>();
        }
        s.epochs_since_improvement = j.at("epochs_since_improvement").get<std::size_t>();
        s.rng_state = {j.at("rng_key").get<std::uint64_t>(), j.at("rng_counter").get<std::uint64_t>()};
        for (const auto& r : j.at("history")) {
            s.history.push_back(epoch_record_from_json(r));
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("training state: ") + e.what());
    }
}

StopDecision early_stop_update(TrainState& state, double metric, ValidationMetric orientation, std::size_t patience) {
    const bool improved =
        std::isfinite(metric) &&
        (!state.best_metric ||
         (orientation == ValidationMetric::loss ? metric < *state.best_metric : metric > *state.best_metric));
    if (improved) {
        state.best_metric = metric;
        state.epochs_since_improvement = 0;
    } else {
        ++state.epochs_since_improvement;
    }
    return state.epochs_since_improvement >= patience ? StopDecision::stop : StopDecision::proceed;
}

double train_step(Model& model, const Batch& batch, const TrainConfig& config, Rng& dropout_rng,
                  std::size_t batch_id) {
    auto& params = model.params().all();
    double value = 0.0;
    try {
        const Tensor loss = model.loss(batch, ForwardMode{true, &dropout_rng});
        value = loss.item();
        if (!std::isfinite(value)) {
            throw NumericError("loss is not finite");
        }
        backward(loss);
    } catch (const NumericError& e) {
        model.params().clear_grads();
        throw NumericError("batch " + std::to_string(batch_id) + ": " + e.what() +
                           "; largest parameter norms: " + norm_report(model));
    }
    if (config.grad_clip_norm) {
        clip_grad_norm(params, *config.grad_clip_norm);
    }
    adam_step(params, AdamConfig{config.lr});
    return value;
}

double train_epoch(Model& model, std::span<const Example> train, const TrainConfig& config, std::size_t epoch) {
    const Rng root = train_root(config.seed);
    Rng plan_rng = root.split("plan").split(epoch);
    const Rng dropout_root = root.split("dropout").split(epoch);
    const auto plan = bucketed_batches(train, config.batch_size, plan_rng);
    double weighted = 0.0;
    std::size_t tokens = 0;
    for (std::size_t b = 0; b < plan.size(); ++b) {
        const std::optional<Batch> batch = batch_of(train, plan[b], config);
        if (!batch) {
            continue;
        }
        Rng dropout_rng = dropout_root.split(b);
        const double loss = train_step(model, *batch, config, dropout_rng, b);
        const std::size_t n = target_tokens(*batch);
        weighted += loss * static_cast<double>(n);
        tokens += n;
    }
    return tokens ? weighted / static_cast<double>(tokens) : 0.0;
}

Evaluation evaluate_teacher_forced(const Model& model, std::span<const Example> examples, const TrainConfig& config) {
    NoGradGuard no_grad;
    Evaluation ev;
    double weighted = 0.0;
    std::size_t tokens = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < examples.size(); start += config.batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(examples.size(), start + config.batch_size); ++i) {
            idx.push_back(i);
        }
        const std::optional<Batch> batch = batch_of(examples, idx, config);
        if (!batch) {
            continue;
        }
        const Tensor probs = model.forward(*batch, ForwardMode{});
        const double loss =
            sequence_loss(probs, batch->tgt_out_extended_ids, batch->tgt_mask, model.config().tgt_vocab_size).item();
        const std::size_t n = target_tokens(*batch);
        weighted += loss * static_cast<double>(n);
        tokens += n;
        const TokenAccuracy acc = model.accuracy(*batch);
        ev.accuracy.correct += acc.correct;
        ev.accuracy.total += acc.total;
    }
    ev.loss = tokens ? weighted / static_cast<double>(tokens) : 0.0;
    return ev;
}

double evaluate_bleu(const Model& model, std::span<const Example> examples, const Vocabulary& tgt_vocab,
                     const TrainConfig& config) {
    std::vector<TokenList> hyps, refs;
    const BeamConfig beam{config.valid_beam, config.valid_max_len, 0.0};
    for (const Example& e : examples) {
        refs.push_back(e.summary_tokens);
        if (e.code_ids.empty()) {
            hyps.emplace_back();
            continue;
        }
        hyps.push_back(resolve_copies(decode_example(model, e, beam, config.max_src_len), tgt_vocab, e.oov_list));
    }
    if (hyps.empty()) {
        throw ContractError("BLEU validation needs at least one example");
    }
    return bleu_corpus(hyps, refs);
}

TrainState fit(Model& model, std::span<const Example> train, std::span<const Example> valid,
               const TrainConfig& config, const FitOptions& options) {
    config.validate();
    if (config.validation_metric == ValidationMetric::bleu && options.tgt_vocab == nullptr) {
        throw ConfigError("BLEU validation needs the target vocabulary");
    }
    if (train.empty() || valid.empty()) {
        throw ContractError("fit needs non-empty training and validation sets");
    }
    if (options.resume && !options.out_dir) {
        throw ConfigError("resume needs an output directory");
    }

    TrainState state;
    state.rng_state = Rng(config.seed).state();
    std::filesystem::path log_path, last_path, best_path;
    if (options.out_dir) {
        std::filesystem::create_directories(*options.out_dir);
        log_path = *options.out_dir / "train_log.jsonl";
        last_path = *options.out_dir / "last.ckpt";
        best_path = *options.out_dir / "best.ckpt";
        if (options.resume) {
            const nlohmann::json meta = load_checkpoint(last_path, model);
            const TrainConfig stored = train_config_from_json(meta.at("train_config"));
            if (stored.seed != config.seed || stored.lr != config.lr || stored.batch_size != config.batch_size) {
                throw ConfigError("resumed run must keep seed, lr and batch_size of " + last_path.string());
            }
            state = train_state_from_json(meta.at("train_state"));
        }
        write_log(log_path, state.history);
    }

    std::size_t run = 0;
    const bool already_stopped = state.epochs_since_improvement >= config.patience;
    while (!already_stopped && state.epoch < config.max_epochs) {
        if (options.epoch_limit && run >= *options.epoch_limit) {
            break;
        }
        const auto t0 = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = state.epoch + 1;
        rec.train_loss = train_epoch(model, train, config, rec.epoch);
        const Evaluation ev = evaluate_teacher_forced(model, valid, config);
        rec.val_accuracy = ev.accuracy.rate();
        rec.val_metric = config.validation_metric == ValidationMetric::loss
                             ? ev.loss
                             : evaluate_bleu(model, valid, *options.tgt_vocab, config);
        const StopDecision decision =
            early_stop_update(state, rec.val_metric, config.validation_metric, config.patience);
        rec.improved = state.epochs_since_improvement == 0;
        state.epoch = rec.epoch;
        rec.stopped_early = decision == StopDecision::stop && state.epoch < config.max_epochs;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        state.history.push_back(rec);
        ++run;

        if (options.out_dir) {
            nlohmann::json meta = options.metadata;
            meta["train_state"] = to_json(state);
            meta["train_config"] = to_json(config);
            save_checkpoint(last_path, model, meta);
            if (rec.improved) {
                save_checkpoint(best_path, model, meta);
            }
            append_log(log_path, rec);
        }
        if (options.on_epoch) {
            options.on_epoch(rec);
        }
        if (decision == StopDecision::stop) {
            break;
        }
    }
    return state;
}

} // namespace codesum
