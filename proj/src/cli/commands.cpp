#include "codesum/cli/commands.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "codesum/corpus/dataset.hpp"
#include "codesum/decoding/beam.hpp"
#include "codesum/errors.hpp"
#include "codesum/transformer/checkpoint.hpp"

namespace codesum::cli {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
}

std::string join(const std::vector<std::string>& tokens) {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        s += (i ? " " : "") + tokens[i];
    }
    return s;
}

TokenList split_ws(const std::string& line) {
    TokenList out;
    std::istringstream in(line);
    for (std::string t; in >> t;) {
        out.push_back(t);
    }
    return out;
}

} // namespace

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        lines.push_back(line);
    }
    return lines;
}

TrainOutcome run_training(const RunConfig& rc, std::ostream& log, bool resume) {
    const auto train_tok = tokenize_records(read_records(rc.data.train));
    const auto valid_tok = tokenize_records(read_records(rc.data.valid));
    if (!rc.data.test.empty()) {
        read_records(rc.data.test);
    }
    const Vocabulary src_vocab = build_vocabulary(code_side(train_tok), rc.vocab.src_max, rc.vocab.min_count);
    const Vocabulary tgt_vocab = build_vocabulary(summary_side(train_tok), rc.vocab.tgt_max, rc.vocab.min_count);
    TrainOutcome outcome{rc, {}, rc.output_dir};
    outcome.config.model.src_vocab_size = src_vocab.size();
    outcome.config.model.tgt_vocab_size = tgt_vocab.size();
    outcome.config.model.validate();
    const std::vector<Example> train = encode_all(train_tok, src_vocab, tgt_vocab);
    const std::vector<Example> valid = encode_all(valid_tok, src_vocab, tgt_vocab);

    const std::filesystem::path dir = outcome.dir;
    const std::string resolved = to_json(outcome.config).dump(2) + "\n";
    if (resume) {
        // A resumed run may only extend its epoch budget and patience.
        const auto stripped = [](nlohmann::json j) {
            j["train"].erase("max_epochs");
            j["train"].erase("patience");
            return j;
        };
        const std::filesystem::path previous = dir / "config.resolved.json";
        if (!std::filesystem::exists(previous) ||
            stripped(read_json_file(previous.string())) != stripped(to_json(outcome.config))) {
            throw ConfigError("cannot resume: resolved config differs from " + previous.string());
        }
    }
    std::filesystem::create_directories(dir);
    write_text(dir / "config.resolved.json", resolved);
    src_vocab.save(dir / "src_vocab.tsv");
    tgt_vocab.save(dir / "tgt_vocab.tsv");

    Model model(outcome.config.model, rc.train.seed);
    FitOptions options;
    options.out_dir = dir;
    options.resume = resume;
    options.tgt_vocab = &tgt_vocab;
    options.metadata = {{"src_vocab_fingerprint", src_vocab.fingerprint()},
                        {"tgt_vocab_fingerprint", tgt_vocab.fingerprint()}};
    const std::string metric = to_string(rc.train.validation_metric);
    options.on_epoch = [&](const EpochRecord& r) {
        log << "epoch " << r.epoch << "  train_loss " << std::fixed << std::setprecision(4) << r.train_loss
            << "  val_" << metric << " " << r.val_metric << "  val_acc " << r.val_accuracy
            << (r.improved ? "  *" : "") << (r.stopped_early ? "  (early stop)" : "") << "\n"
            << std::defaultfloat;
    };
    outcome.state = fit(model, train, valid, outcome.config.train, options);
    return outcome;
}

LoadedRun load_run(const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& checkpoint) {
    LoadedRun run;
    run.config = resolve_run_config(read_json_file((run_dir / "config.resolved.json").string()));
    run.src_vocab = Vocabulary::load(run_dir / "src_vocab.tsv");
    run.tgt_vocab = Vocabulary::load(run_dir / "tgt_vocab.tsv");
    const std::filesystem::path ckpt = checkpoint.value_or(run_dir / "best.ckpt");
    const ModelConfig stored = read_checkpoint_config(ckpt);
    run.model = std::make_unique<Model>(stored, 0);
    const nlohmann::json meta = load_checkpoint(ckpt, *run.model);
    const auto check = [&](const char* key, const Vocabulary& v, const char* side) {
        const std::uint64_t expected = meta.value(key, std::uint64_t{0});
        if (expected != v.fingerprint()) {
            std::ostringstream msg;
            msg << side << " vocabulary does not match " << ckpt.string() << ": checkpoint fingerprint " << std::hex
                << expected << ", vocabulary file " << v.fingerprint();
            throw ConfigError(msg.str());
        }
    };
    check("src_vocab_fingerprint", run.src_vocab, "source");
    check("tgt_vocab_fingerprint", run.tgt_vocab, "target");
    return run;
}

std::vector<std::string> summarize_lines(const LoadedRun& run, const std::vector<std::string>& code_lines,
                                         const SummarizeOptions& options) {
    const BeamConfig beam{options.beam_size, options.max_len, options.length_alpha};
    const std::size_t max_src = run.config.train.max_src_len;
    std::vector<std::string> out;
    out.reserve(code_lines.size());
    for (const std::string& line : code_lines) {
        const TokenizedRecord tok = tokenize_record({line, ""});
        const Example e = encode_with_copy(tok.code, {}, run.src_vocab, run.tgt_vocab);
        if (e.code_ids.empty()) {
            out.emplace_back();
            continue;
        }
        Hypothesis h;
        if (options.greedy) {
            const std::size_t n = std::min(e.code_ids.size(), max_src);
            ModelScorer scorer(*run.model, {e.code_ids.begin(), e.code_ids.begin() + static_cast<std::ptrdiff_t>(n)},
                               {e.src_extended_ids.begin(), e.src_extended_ids.begin() + static_cast<std::ptrdiff_t>(n)},
                               e.oov_list.size());
            h = greedy_decode(scorer, options.max_len);
        } else {
            h = decode_example(*run.model, e, beam, max_src);
        }
        out.push_back(join(resolve_copies(h, run.tgt_vocab, e.oov_list)));
    }
    return out;
}

MetricReport evaluate_files(const std::filesystem::path& hyps, const std::filesystem::path& refs) {
    const auto h = read_lines(hyps);
    const auto r = read_lines(refs);
    if (h.size() != r.size()) {
        throw FormatError("hypotheses have " + std::to_string(h.size()) + " lines but references have " +
                          std::to_string(r.size()));
    }
    std::vector<TokenList> ht, rt;
    for (std::size_t i = 0; i < h.size(); ++i) {
        ht.push_back(split_ws(h[i]));
        rt.push_back(split_ws(r[i]));
    }
    return evaluate_corpus(ht, rt);
}

} // namespace codesum::cli
