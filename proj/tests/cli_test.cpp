#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "codesum/cli/commands.hpp"
#include "codesum/corpus/dataset.hpp"
#include "codesum/errors.hpp"
#include "codesum/transformer/checkpoint.hpp"
#include "doctest.h"

using namespace codesum;
using namespace codesum::cli;

namespace {

const std::string kData = CODESUM_DATA_DIR;

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("codesum_cli_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// A desk-scale run on the bundled 64-example set.
nlohmann::json small_run(const std::filesystem::path& out, const std::string& preset = "full") {
    return {{"preset", preset},
            {"model", {{"layers", 1}, {"heads", 2}, {"d_model", 16}, {"d_k", 8}, {"d_v", 8}, {"d_ff", 32},
                       {"max_positions", 64}}},
            {"train", {{"lr", 3e-3}, {"batch_size", 16}, {"max_epochs", 2}, {"patience", 1},
                       {"max_src_len", 60}, {"max_tgt_len", 10}}},
            {"data", {{"train", kData + "/synthetic/overfit64.jsonl"}, {"valid", kData + "/synthetic/overfit64.jsonl"}}},
            {"vocab", {{"min_count", 2}}},
            {"decode", {{"beam_size", 4}, {"max_len", 8}}},
            {"output_dir", out.string()}};
}

std::filesystem::path write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream(path) << j.dump(2);
    return path;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    for (const std::string& l : lines) {
        out << l << '\n';
    }
}

struct Result {
    int code;
    std::string out, err;
};

Result invoke(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<nlohmann::json> log_without_time(const std::filesystem::path& path) {
    std::vector<nlohmann::json> out;
    for (const std::string& line : read_lines(path)) {
        nlohmann::json j = nlohmann::json::parse(line);
        j.erase("seconds");
        out.push_back(j);
    }
    return out;
}

std::size_t table_rows(const std::string& table) {
    std::size_t rows = 0;
    std::istringstream in(table);
    for (std::string line; std::getline(in, line);) {
        rows += line.rfind("|", 0) == 0 ? 1 : 0;
    }
    return rows - 2; // header and rule
}

/// Trains one small run shared by the summarize tests.
const std::filesystem::path& trained_run() {
    static const std::filesystem::path dir = [] {
        const auto root = scratch("trained");
        const auto cfg = write_json(root / "run.json", small_run(root / "run"));
        const Result r = invoke({"train", "--config", cfg.string(), "--train.max_epochs=6", "--train.patience=5"});
        REQUIRE(r.code == 0);
        return root / "run";
    }();
    return dir;
}

} // namespace

TEST_CASE("overrides") {
    nlohmann::json doc = {{"train", {{"lr", 0.1}}}};
    apply_override(doc, "--train.lr=0.5");
    apply_override(doc, "model.encoder_position=absolute");
    apply_override(doc, "model.layer_clip=[2,4]");
    apply_override(doc, "output_dir=runs/x");
    CHECK(doc["train"]["lr"] == 0.5);
    CHECK(doc["model"]["encoder_position"] == "absolute");
    CHECK(doc["model"]["layer_clip"] == nlohmann::json::array({2, 4}));
    CHECK(doc["output_dir"] == "runs/x");
    CHECK_THROWS_AS(apply_override(doc, "--novalue"), ConfigError);
    CHECK_THROWS_AS(apply_override(doc, "train.lr.x=1"), ConfigError);
}

TEST_CASE("run config resolution") {
    const auto dir = scratch("resolve");
    SUBCASE("presets expand to their definitions") {
        const RunConfig base = resolve_run_config(small_run(dir, "base"));
        CHECK(base.model.encoder_position == EncoderPosition::absolute);
        CHECK(base.model.decoder_position == DecoderPosition::absolute);
        CHECK_FALSE(base.model.use_copy);
        const RunConfig full = resolve_run_config(small_run(dir, "full"));
        CHECK(full.model.encoder_position == EncoderPosition::relative_directional);
        CHECK(full.model.clip == 16);
        CHECK(full.model.use_copy);
        CHECK(full.model.d_model == 16); // the model section wins over the preset
    }
    SUBCASE("every missing key is listed at once") {
        try {
            resolve_run_config(nlohmann::json::object());
            FAIL("expected a ConfigError");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            for (const char* key : {"preset", "output_dir", "data.train", "data.valid"}) {
                CHECK(msg.find(std::string("missing key ") + key) != std::string::npos);
            }
        }
    }
    SUBCASE("problems from several sections are collected") {
        nlohmann::json doc = small_run(dir);
        doc["model"]["dropout"] = 1.5;
        doc["train"]["batch_size"] = 0;
        doc["decode"]["beam_size"] = 0;
        doc["colour"] = "blue";
        try {
            resolve_run_config(doc);
            FAIL("expected a ConfigError");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("dropout") != std::string::npos);
            CHECK(msg.find("batch_size") != std::string::npos);
            CHECK(msg.find("beam_size") != std::string::npos);
            CHECK(msg.find("colour") != std::string::npos);
        }
    }
    SUBCASE("resolved config round-trips") {
        const RunConfig rc = resolve_run_config(small_run(dir), {"--train.seed=9"});
        CHECK(rc.train.seed == 9);
        const RunConfig again = resolve_run_config(to_json(rc));
        CHECK(to_json(again) == to_json(rc));
    }
    SUBCASE("position tables must cover the configured lengths") {
        CHECK_THROWS_AS(resolve_run_config(small_run(dir, "base"), {"--train.max_src_len=500"}), ConfigError);
    }
}

TEST_CASE("train command") {
    const auto root = scratch("train");
    const auto cfg = write_json(root / "run.json", small_run(root / "a"));

    SUBCASE("full preset on the bundled set leaves every artifact") {
        const Result r = invoke({"train", "--config", cfg.string()});
        REQUIRE(r.code == 0);
        CHECK(r.out.find("best validation loss") != std::string::npos);
        for (const char* f : {"best.ckpt", "last.ckpt", "train_log.jsonl", "config.resolved.json", "src_vocab.tsv",
                              "tgt_vocab.tsv"}) {
            CHECK(std::filesystem::exists(root / "a" / f));
        }
        const nlohmann::json resolved = read_json_file((root / "a" / "config.resolved.json").string());
        CHECK(resolved["preset"] == "full");
        CHECK(resolved["model"]["src_vocab_size"].get<std::size_t>() > 4);
        CHECK(resolved["output_dir"] == (root / "a").string());
    }
    SUBCASE("an invalid position mode is rejected before anything is written") {
        const Result r = invoke({"train", "--config", cfg.string(), "--model.encoder_position=diagonal",
                              "--output_dir=" + (root / "never").string()});
        CHECK(r.code == 2);
        CHECK(r.err.find("diagonal") != std::string::npos);
        CHECK_FALSE(std::filesystem::exists(root / "never"));
    }
    SUBCASE("unreadable data writes nothing") {
        const Result r = invoke({"train", "--config", cfg.string(), "--data.valid=" + (root / "missing.jsonl").string(),
                              "--output_dir=" + (root / "never").string()});
        CHECK(r.code == 1);
        CHECK_FALSE(std::filesystem::exists(root / "never"));
    }
    SUBCASE("two identical invocations give identical logs") {
        REQUIRE(invoke({"train", "--config", cfg.string(), "--output_dir=" + (root / "x").string()}).code == 0);
        REQUIRE(invoke({"train", "--config", cfg.string(), "--output_dir=" + (root / "y").string()}).code == 0);
        CHECK(log_without_time(root / "x" / "train_log.jsonl") == log_without_time(root / "y" / "train_log.jsonl"));
        CHECK(log_without_time(root / "x" / "train_log.jsonl").size() == 2);
    }
    SUBCASE("resume continues the logged run") {
        const std::string r = "--output_dir=" + (root / "r").string();
        const std::string s = "--output_dir=" + (root / "s").string();
        REQUIRE(invoke({"train", "--config", cfg.string(), r, "--train.max_epochs=3", "--train.patience=2"}).code == 0);
        REQUIRE(invoke({"train", "--config", cfg.string(), s, "--train.max_epochs=2", "--train.patience=1"}).code == 0);
        REQUIRE(invoke({"train", "--config", cfg.string(), s, "--train.max_epochs=3", "--train.patience=2", "--resume"})
                    .code == 0);
        CHECK(log_without_time(root / "s" / "train_log.jsonl") == log_without_time(root / "r" / "train_log.jsonl"));
        CHECK(read_lines(root / "s" / "train_log.jsonl").size() == 3);
        Model a(read_checkpoint_config(root / "r" / "last.ckpt"), 0), b(read_checkpoint_config(root / "s" / "last.ckpt"), 0);
        load_checkpoint(root / "r" / "last.ckpt", a);
        load_checkpoint(root / "s" / "last.ckpt", b);
        CHECK(a.params().fingerprint() == b.params().fingerprint());
        // Anything beyond the epoch budget must match to resume.
        CHECK(invoke({"train", "--config", cfg.string(), s, "--train.max_epochs=4", "--train.patience=2",
                      "--train.lr=0.1", "--resume"})
                  .code == 2);
        CHECK(invoke({"train", "--config", cfg.string(), "--output_dir=" + (root / "none").string(), "--resume"})
                  .code == 2);
    }
    SUBCASE("unknown subcommand") {
        CHECK(invoke({"fly"}).code == 2);
        CHECK(invoke({}).code == 2);
    }
}

TEST_CASE("summarize command") {
    const auto& run = trained_run();
    const auto dir = scratch("summarize");

    SUBCASE("empty input gives an empty file") {
        write_lines(dir / "empty.txt", {});
        const Result r = invoke({"summarize", "--run", run.string(), "--input", (dir / "empty.txt").string(), "--output",
                              (dir / "out.txt").string()});
        CHECK(r.code == 0);
        CHECK(std::filesystem::exists(dir / "out.txt"));
        CHECK(std::filesystem::file_size(dir / "out.txt") == 0);
    }
    SUBCASE("one summary per line, in order, and beam 1 equals greedy") {
        const auto records = read_records(kData + "/synthetic/overfit64.jsonl");
        std::vector<std::string> code;
        for (std::size_t i = 0; i < 10; ++i) {
            code.push_back(records[i].code);
        }
        write_lines(dir / "code.txt", code);
        REQUIRE(invoke({"summarize", "--run", run.string(), "--input", (dir / "code.txt").string(), "--output",
                     (dir / "beam1.txt").string(), "--beam", "1"})
                    .code == 0);
        REQUIRE(invoke({"summarize", "--run", run.string(), "--input", (dir / "code.txt").string(), "--output",
                     (dir / "greedy.txt").string(), "--greedy"})
                    .code == 0);
        REQUIRE(invoke({"summarize", "--run", run.string(), "--input", (dir / "code.txt").string(), "--output",
                     (dir / "beam4.txt").string()})
                    .code == 0);
        const auto beam1 = read_lines(dir / "beam1.txt");
        CHECK(beam1.size() == 10);
        CHECK(beam1 == read_lines(dir / "greedy.txt"));
        CHECK(read_lines(dir / "beam4.txt").size() == 10);

        // Reversing the input reverses the output.
        std::vector<std::string> reversed(code.rbegin(), code.rend());
        write_lines(dir / "rev.txt", reversed);
        REQUIRE(invoke({"summarize", "--run", run.string(), "--input", (dir / "rev.txt").string(), "--output",
                     (dir / "rev_out.txt").string(), "--beam", "1"})
                    .code == 0);
        auto rev_out = read_lines(dir / "rev_out.txt");
        std::reverse(rev_out.begin(), rev_out.end());
        CHECK(rev_out == beam1);
    }
    SUBCASE("a vocabulary that does not belong to the checkpoint is refused") {
        const auto copy = dir / "tampered";
        std::filesystem::copy(run, copy, std::filesystem::copy_options::recursive);
        Vocabulary::from_tokens({"foo", "bar"}).save(copy / "tgt_vocab.tsv");
        write_lines(dir / "code.txt", {"int get x ( ) { return x ; }"});
        const Result r = invoke({"summarize", "--run", copy.string(), "--input", (dir / "code.txt").string(), "--output",
                              (dir / "out.txt").string()});
        CHECK(r.code == 2);
        CHECK(r.err.find("fingerprint") != std::string::npos);
    }
    SUBCASE("bad decoding settings") {
        write_lines(dir / "code.txt", {"x"});
        CHECK(invoke({"summarize", "--run", run.string(), "--input", (dir / "code.txt").string(), "--output",
                   (dir / "o.txt").string(), "--beam", "0"})
                  .code == 2);
    }
}

TEST_CASE("evaluate command") {
    const auto dir = scratch("evaluate");
    SUBCASE("identical files score 100") {
        write_lines(dir / "a.txt", {"returns the value", "sets the name"});
        const Result r = invoke({"evaluate", "--hyps", (dir / "a.txt").string(), "--refs", (dir / "a.txt").string(),
                              "--report", (dir / "report.json").string()});
        REQUIRE(r.code == 0);
        const nlohmann::json line = nlohmann::json::parse(r.out.substr(0, r.out.find('\n')));
        CHECK(line["bleu"].get<double>() == doctest::Approx(100.0));
        CHECK(line["rouge_l"].get<double>() == doctest::Approx(100.0));
        CHECK(r.out.find("ROUGE-L") != std::string::npos);
        CHECK(read_json_file((dir / "report.json").string()) == line);
    }
    SUBCASE("hand-scored pair") {
        write_lines(dir / "h.txt", {"the the the"});
        write_lines(dir / "r.txt", {"the cat"});
        const MetricReport rep = evaluate_files(dir / "h.txt", dir / "r.txt");
        CHECK(std::abs(rep.bleu - 100.0 * std::pow(1.0 / 18.0, 0.25)) < 1e-6);
        // LCS 1: P = 1/3, R = 1/2.
        const double p = 1.0 / 3.0, rr = 0.5;
        CHECK(std::abs(rep.rouge_l - 100.0 * 2.44 * p * rr / (rr + 1.44 * p)) < 1e-6);
    }
    SUBCASE("an empty hypothesis is scored") {
        write_lines(dir / "h.txt", {"sets the name", ""});
        write_lines(dir / "r.txt", {"sets the name", "returns the value"});
        const MetricReport rep = evaluate_files(dir / "h.txt", dir / "r.txt");
        CHECK(rep.n_examples == 2);
        CHECK(rep.rouge_l == doctest::Approx(50.0));
    }
    SUBCASE("line counts must agree") {
        write_lines(dir / "h.txt", {"a", "b", "c"});
        write_lines(dir / "r.txt", {"a", "b"});
        const Result r = invoke({"evaluate", "--hyps", (dir / "h.txt").string(), "--refs", (dir / "r.txt").string()});
        CHECK(r.code == 1);
        CHECK(r.err.find("3") != std::string::npos);
        CHECK(r.err.find("2") != std::string::npos);
    }
}

TEST_CASE("ablation grids") {
    const auto dir = scratch("grids");
    RunConfig base = resolve_run_config(small_run(dir / "out"));
    base.train.seed = 40;

    const auto t3 = expand_grid("table3", base);
    REQUIRE(t3.size() == 4);
    CHECK(t3[1].config.model.encoder_position == EncoderPosition::absolute);
    CHECK(t3[1].config.model.decoder_position == DecoderPosition::none);
    CHECK(t3[3].config.model.encoder_position == EncoderPosition::none);

    const auto t4 = expand_grid("table4", base);
    REQUIRE(t4.size() == 8);
    CHECK(t4[0].config.model.clip == 8);
    CHECK(t4[1].config.model.encoder_position == EncoderPosition::relative_undirected);
    CHECK(t4[6].config.model.layer_clip == std::vector<std::size_t>{2});
    for (std::size_t i = 0; i < t4.size(); ++i) {
        CHECK(t4[i].config.train.seed == (40u ^ i));
        CHECK(t4[i].config.output_dir == (dir / "out" / ("cell_" + std::to_string(i))).string());
    }

    RunConfig full_scale = base;
    full_scale.model = base_preset();
    full_scale.train.max_src_len = 400;
    const auto t5 = expand_grid("table5", full_scale);
    CHECK(t5.size() == 7); // d_model 512 with 6 layers appears in both sweeps
    CHECK(t5[0].config.model.d_ff == 1024);

    write_json(dir / "dup.json", {{"sweeps", {{{"k", {8, 8, 16}}}, {{"k", {16}}, {"use_copy", {true}}}}}});
    CHECK(expand_grid((dir / "dup.json").string(), base).size() == 2);

    write_json(dir / "bad.json", {{"axes", {{"colour", {1, 2}}}}});
    CHECK_THROWS_AS(expand_grid((dir / "bad.json").string(), base), ConfigError);
    CHECK_THROWS_AS(expand_grid("table9", base), ConfigError);
    write_json(dir / "badk.json", {{"axes", {{"k", {"2^j"}}}}});
    CHECK_THROWS_AS(expand_grid((dir / "badk.json").string(), base), ConfigError);
}

TEST_CASE("ablate command") {
    const auto root = scratch("ablate");
    nlohmann::json run = small_run(root / "grid");
    run["data"]["test"] = kData + "/synthetic/overfit64.jsonl";
    const auto cfg = write_json(root / "run.json", run);

    SUBCASE("table 3 grid emits four rows") {
        const Result r = invoke({"ablate", "--config", cfg.string(), "--grid", "table3", "--preset=base"});
        REQUIRE(r.code == 0);
        const std::string table = r.out.substr(r.out.find("| source_absolute"));
        CHECK(table_rows(table) == 4);
        CHECK(table.find("BLEU") != std::string::npos);
        CHECK(read_lines(root / "grid" / "ablation.jsonl").size() == 4);
        CHECK(std::filesystem::exists(root / "grid" / "cell_3" / "best.ckpt"));
    }
    SUBCASE("table 4 grid emits eight rows") {
        const Result r = invoke({"ablate", "--config", cfg.string(), "--grid", "table4", "--data.test="});
        REQUIRE(r.code == 0);
        const std::string table = r.out.substr(r.out.find("| k"));
        CHECK(table_rows(table) == 8);
        CHECK(table.find("2^i") != std::string::npos);
    }
    SUBCASE("duplicate cells run once") {
        write_json(root / "dup.json", {{"axes", {{"use_copy", {true, true, false}}}}});
        const Result r = invoke({"ablate", "--config", cfg.string(), "--grid", (root / "dup.json").string(), "--data.test="});
        REQUIRE(r.code == 0);
        CHECK(table_rows(r.out.substr(r.out.find("| use_copy"))) == 2);
    }
    SUBCASE("an invalid grid trains nothing") {
        write_json(root / "bad.json", {{"axes", {{"layers", {1, 0}}}}});
        const Result r = invoke({"ablate", "--config", cfg.string(), "--grid", (root / "bad.json").string()});
        CHECK(r.code == 2);
        CHECK_FALSE(std::filesystem::exists(root / "grid"));
    }
}
