#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "codesum/cli/commands.hpp"
#include "codesum/corpus/dataset.hpp"
#include "codesum/decoding/beam.hpp"
#include "codesum/errors.hpp"

namespace codesum::cli {

namespace {

RunConfig config_from_args(const std::string& path, const std::vector<std::string>& overrides) {
    nlohmann::json doc = path.empty() ? nlohmann::json::object() : read_json_file(path);
    return resolve_run_config(std::move(doc), overrides);
}

std::string report_table(const MetricReport& r) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << "metric    score\n"
        << "BLEU      " << r.bleu << "\n"
        << "METEOR    " << r.meteor << "\n"
        << "ROUGE-L   " << r.rouge_l << "\n"
        << "examples  " << r.n_examples << "\n";
    return out.str();
}

int cmd_train(const std::string& config, const std::vector<std::string>& overrides, bool resume, std::ostream& out) {
    const RunConfig rc = config_from_args(config, overrides);
    const TrainOutcome outcome = run_training(rc, out, resume);
    const std::string metric = to_string(rc.train.validation_metric);
    if (outcome.state.best_metric) {
        out << "best validation " << metric << ": " << *outcome.state.best_metric << "\n";
    }
    out << "artifacts in " << outcome.dir.string() << "\n";
    return 0;
}

int cmd_summarize(const std::string& run_dir, const std::string& checkpoint, const std::string& input,
                  const std::string& output, const SummarizeOptions& options) {
    if (options.beam_size < 1 || options.max_len < 1) {
        throw ConfigError("--beam and --max-len must be at least 1");
    }
    const LoadedRun run =
        load_run(run_dir, checkpoint.empty() ? std::nullopt : std::optional<std::filesystem::path>(checkpoint));
    if (options.max_len > run.model->config().max_positions &&
        run.model->config().decoder_position == DecoderPosition::absolute) {
        throw ConfigError("--max-len exceeds the model's " + std::to_string(run.model->config().max_positions) +
                          " positions");
    }
    const std::vector<std::string> summaries = summarize_lines(run, read_lines(input), options);
    std::ofstream out(output, std::ios::trunc);
    for (const std::string& s : summaries) {
        out << s << '\n';
    }
    if (!out) {
        throw FormatError("cannot write " + output);
    }
    return 0;
}

int cmd_evaluate(const std::string& hyps, const std::string& refs, const std::string& report, std::ostream& out) {
    const MetricReport r = evaluate_files(hyps, refs);
    const std::string line = nlohmann::json(r).dump();
    out << line << "\n" << report_table(r);
    if (!report.empty()) {
        std::ofstream f(report, std::ios::trunc);
        f << line << '\n';
        if (!f) {
            throw FormatError("cannot write " + report);
        }
    }
    return 0;
}

std::string format_value(const nlohmann::json& v) {
    if (v.is_boolean()) {
        return v.get<bool>() ? "yes" : "no";
    }
    return v.is_string() ? v.get<std::string>() : v.dump();
}

int cmd_ablate(const std::string& config, const std::string& grid, const std::vector<std::string>& overrides,
               std::ostream& out) {
    const RunConfig base = config_from_args(config, overrides);
    const std::vector<AblationCell> cells = expand_grid(grid, base);
    const std::string metric = "val_" + to_string(base.train.validation_metric);
    const bool has_test = !base.data.test.empty();

    std::vector<std::string> header;
    for (const auto& [axis, value] : cells.front().assignments) {
        header.push_back(axis);
    }
    // Cells from different sweeps may carry different axes.
    for (const AblationCell& cell : cells) {
        for (const auto& [axis, value] : cell.assignments) {
            if (std::find(header.begin(), header.end(), axis) == header.end()) {
                header.push_back(axis);
            }
        }
    }
    const std::size_t n_axes = header.size();
    header.push_back("#Param. (M)");
    header.push_back(metric);
    if (has_test) {
        header.insert(header.end(), {"BLEU", "METEOR", "ROUGE-L"});
    }
    header.push_back("status");

    std::filesystem::create_directories(base.output_dir);
    std::ofstream jsonl(std::filesystem::path(base.output_dir) / "ablation.jsonl", std::ios::trunc);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const AblationCell& cell = cells[i];
        std::vector<std::string> row(n_axes, "-");
        nlohmann::json record{{"cell", i}, {"seed", cell.config.train.seed}, {"output_dir", cell.config.output_dir}};
        for (const auto& [axis, value] : cell.assignments) {
            const auto at = std::find(header.begin(), header.end(), axis) - header.begin();
            row[static_cast<std::size_t>(at)] = format_value(value);
            record["axes"][axis] = value;
        }
        std::ostringstream params;
        params << std::fixed << std::setprecision(3)
               << static_cast<double>(analytic_block_parameters(cell.config.model)) / 1e6;
        row.push_back(params.str());
        record["block_parameters"] = analytic_block_parameters(cell.config.model);
        out << "cell " << i + 1 << "/" << cells.size() << " -> " << cell.config.output_dir << "\n";
        try {
            const TrainOutcome outcome = run_training(cell.config, out);
            std::ostringstream m;
            m << std::fixed << std::setprecision(4) << outcome.state.best_metric.value_or(0.0);
            row.push_back(m.str());
            record[metric] = outcome.state.best_metric.value_or(0.0);
            if (has_test) {
                const LoadedRun run = load_run(outcome.dir);
                const auto test = tokenize_records(read_records(cell.config.data.test));
                const std::vector<Example> examples = encode_all(test, run.src_vocab, run.tgt_vocab);
                const BeamConfig beam{cell.config.decode.beam_size, cell.config.decode.max_len,
                                      cell.config.decode.length_alpha};
                std::vector<TokenList> hyps, refs;
                for (const Example& e : examples) {
                    refs.push_back(e.summary_tokens);
                    hyps.push_back(e.code_ids.empty()
                                       ? TokenList{}
                                       : resolve_copies(decode_example(*run.model, e, beam,
                                                                       cell.config.train.max_src_len),
                                                        run.tgt_vocab, e.oov_list));
                }
                const MetricReport r = evaluate_corpus(hyps, refs);
                std::ostringstream b, me, ro;
                b << std::fixed << std::setprecision(2) << r.bleu;
                me << std::fixed << std::setprecision(2) << r.meteor;
                ro << std::fixed << std::setprecision(2) << r.rouge_l;
                row.insert(row.end(), {b.str(), me.str(), ro.str()});
                record["test"] = nlohmann::json(r);
            }
            row.push_back("ok");
            record["status"] = "ok";
        } catch (const std::exception& e) {
            row.resize(header.size() - 1, "-");
            row.push_back(std::string("failed: ") + e.what());
            record["status"] = std::string("failed: ") + e.what();
        }
        jsonl << record.dump() << '\n';
        rows.push_back(row);
    }

    std::ostringstream table;
    const auto emit = [&](const std::vector<std::string>& cols) {
        table << "|";
        for (const std::string& c : cols) {
            table << " " << c << " |";
        }
        table << "\n";
    };
    emit(header);
    emit(std::vector<std::string>(header.size(), "---"));
    for (const auto& row : rows) {
        emit(row);
    }
    std::ofstream md(std::filesystem::path(base.output_dir) / "ablation.md", std::ios::trunc);
    md << table.str();
    out << table.str();
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Transformer-based source code summarization"};
    app.require_subcommand(1);

    std::string config, grid, run_dir, checkpoint, input, output, hyps, refs, report;
    bool resume = false;
    SummarizeOptions summarize;

    CLI::App* train = app.add_subcommand("train", "Train a model; extra --section.key=value options override the config");
    train->add_option("--config", config, "JSON run config");
    train->add_flag("--resume", resume, "Continue from <output_dir>/last.ckpt");
    train->allow_extras();

    CLI::App* summ = app.add_subcommand("summarize", "Summarize one code snippet per input line");
    summ->add_option("--run", run_dir, "Training output directory")->required();
    summ->add_option("--checkpoint", checkpoint, "Checkpoint file (default <run>/best.ckpt)");
    summ->add_option("--input", input, "Code, one snippet per line")->required();
    summ->add_option("--output", output, "Summaries, one per line")->required();
    summ->add_option("--beam", summarize.beam_size, "Beam size")->capture_default_str();
    summ->add_option("--max-len", summarize.max_len, "Maximum summary length")->capture_default_str();
    summ->add_option("--alpha", summarize.length_alpha, "Length normalisation exponent")->capture_default_str();
    summ->add_flag("--greedy", summarize.greedy, "Greedy argmax decoding");

    CLI::App* eval = app.add_subcommand("evaluate", "Score hypotheses against references");
    eval->add_option("--hyps", hyps, "Hypotheses, one per line")->required();
    eval->add_option("--refs", refs, "References, one per line")->required();
    eval->add_option("--report", report, "Write the JSON report here");

    CLI::App* ablate = app.add_subcommand("ablate", "Train every cell of an ablation grid");
    ablate->add_option("--config", config, "JSON run config for the base cell");
    ablate->add_option("--grid", grid, "table3, table4, table5 or a grid JSON file")->required();
    ablate->allow_extras();

    std::vector<const char*> argv{"codesum"};
    for (const std::string& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) {
            return cmd_train(config, train->remaining(), resume, out);
        }
        if (*summ) {
            return cmd_summarize(run_dir, checkpoint, input, output, summarize);
        }
        if (*eval) {
            return cmd_evaluate(hyps, refs, report, out);
        }
        return cmd_ablate(config, grid, ablate->remaining(), out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace codesum::cli
