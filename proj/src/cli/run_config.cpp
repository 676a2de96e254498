#include "codesum/cli/run_config.hpp"

#include <fstream>
#include <set>

#include "codesum/errors.hpp"

namespace codesum::cli {

namespace {

template <typename T>
void read_field(const nlohmann::json& section, const char* key, T& field, const std::string& where,
                std::vector<std::string>& problems) {
    if (!section.contains(key)) {
        return;
    }
    try {
        section.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
        problems.push_back(where + "." + key + " has the wrong type");
    }
}

void check_keys(const nlohmann::json& section, const std::set<std::string>& known, const std::string& where,
                std::vector<std::string>& problems) {
    for (const auto& item : section.items()) {
        if (!known.contains(item.key())) {
            problems.push_back("unknown key " + (where.empty() ? "" : where + ".") + item.key());
        }
    }
}

/// Runs `fn`, turning a ConfigError into entries of `problems`.
template <typename Fn>
void collect(Fn&& fn, std::vector<std::string>& problems) {
    try {
        fn();
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        std::size_t start = 0;
        // Multi-line messages carry one problem per indented line.
        if (msg.find('\n') != std::string::npos) {
            start = msg.find('\n') + 1;
        }
        while (start < msg.size()) {
            std::size_t end = msg.find('\n', start);
            if (end == std::string::npos) {
                end = msg.size();
            }
            std::string line = msg.substr(start, end - start);
            line.erase(0, line.find_first_not_of(' '));
            if (!line.empty()) {
                problems.push_back(line);
            }
            start = end + 1;
        }
    }
}

} // namespace

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json model;
    to_json(model, c.model);
    return {{"preset", c.preset},
            {"model", model},
            {"train", to_json(c.train)},
            {"data", {{"train", c.data.train}, {"valid", c.data.valid}, {"test", c.data.test}}},
            {"vocab", {{"src_max", c.vocab.src_max}, {"tgt_max", c.vocab.tgt_max}, {"min_count", c.vocab.min_count}}},
            {"decode",
             {{"beam_size", c.decode.beam_size},
              {"max_len", c.decode.max_len},
              {"length_alpha", c.decode.length_alpha}}},
            {"output_dir", c.output_dir}};
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
    std::string text = assignment;
    if (text.rfind("--", 0) == 0) {
        text.erase(0, 2);
    }
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    }
    const std::string path = text.substr(0, eq);
    const std::string raw = text.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) {
        value = raw;
    }
    nlohmann::json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) {
            throw ConfigError("override '" + assignment + "' has an empty key");
        }
        if (!node->is_object()) {
            if (!node->is_null()) {
                throw ConfigError("override '" + assignment + "' descends into a non-object");
            }
            *node = nlohmann::json::object();
        }
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

RunConfig resolve_run_config(nlohmann::json doc, const std::vector<std::string>& overrides) {
    if (doc.is_null()) {
        doc = nlohmann::json::object();
    }
    if (!doc.is_object()) {
        throw ConfigError("run config must be a JSON object");
    }
    for (const std::string& o : overrides) {
        apply_override(doc, o);
    }

    std::vector<std::string> problems;
    check_keys(doc, {"preset", "model", "train", "data", "vocab", "decode", "output_dir"}, "", problems);
    for (const char* key : {"preset", "output_dir"}) {
        if (!doc.contains(key)) {
            problems.push_back(std::string("missing key ") + key);
        }
    }
    const nlohmann::json data = doc.value("data", nlohmann::json::object());
    for (const char* key : {"train", "valid"}) {
        if (!data.is_object() || !data.contains(key)) {
            problems.push_back(std::string("missing key data.") + key);
        }
    }

    RunConfig rc;
    read_field(doc, "preset", rc.preset, "", problems);
    read_field(doc, "output_dir", rc.output_dir, "", problems);
    if (data.is_object()) {
        check_keys(data, {"train", "valid", "test"}, "data", problems);
        read_field(data, "train", rc.data.train, "data", problems);
        read_field(data, "valid", rc.data.valid, "data", problems);
        read_field(data, "test", rc.data.test, "data", problems);
    }

    nlohmann::json model = nlohmann::json::object();
    collect(
        [&] {
            if (rc.preset != "custom") {
                to_json(model, preset(rc.preset));
            }
        },
        problems);
    const nlohmann::json user_model = doc.value("model", nlohmann::json::object());
    if (!user_model.is_object()) {
        problems.push_back("model must be an object");
    } else {
        for (const auto& item : user_model.items()) {
            model[item.key()] = item.value();
        }
        collect([&] { from_json(model, rc.model); }, problems);
    }
    collect([&] { rc.train = train_config_from_json(doc.value("train", nlohmann::json::object())); }, problems);

    const nlohmann::json vocab = doc.value("vocab", nlohmann::json::object());
    check_keys(vocab, {"src_max", "tgt_max", "min_count"}, "vocab", problems);
    read_field(vocab, "src_max", rc.vocab.src_max, "vocab", problems);
    read_field(vocab, "tgt_max", rc.vocab.tgt_max, "vocab", problems);
    read_field(vocab, "min_count", rc.vocab.min_count, "vocab", problems);
    if (rc.vocab.src_max <= Vocabulary::kNumSpecials || rc.vocab.tgt_max <= Vocabulary::kNumSpecials) {
        problems.push_back("vocab.src_max and vocab.tgt_max must exceed the 4 special tokens");
    }
    if (rc.vocab.min_count < 1) {
        problems.push_back("vocab.min_count must be at least 1");
    }

    const nlohmann::json decode = doc.value("decode", nlohmann::json::object());
    check_keys(decode, {"beam_size", "max_len", "length_alpha"}, "decode", problems);
    read_field(decode, "beam_size", rc.decode.beam_size, "decode", problems);
    read_field(decode, "max_len", rc.decode.max_len, "decode", problems);
    read_field(decode, "length_alpha", rc.decode.length_alpha, "decode", problems);
    if (rc.decode.beam_size < 1 || rc.decode.max_len < 1) {
        problems.push_back("decode.beam_size and decode.max_len must be at least 1");
    }

    // Vocabulary sizes come from the data; validate the rest with stand-ins.
    ModelConfig probe = rc.model;
    probe.src_vocab_size = std::max<std::size_t>(probe.src_vocab_size, Vocabulary::kNumSpecials + 1);
    probe.tgt_vocab_size = std::max<std::size_t>(probe.tgt_vocab_size, Vocabulary::kNumSpecials + 1);
    collect([&] { probe.validate(); }, problems);
    collect([&] { rc.train.validate(); }, problems);
    if (rc.model.encoder_position == EncoderPosition::absolute && rc.model.max_positions < rc.train.max_src_len) {
        problems.push_back("model.max_positions is smaller than train.max_src_len");
    }
    if (rc.model.decoder_position == DecoderPosition::absolute &&
        rc.model.max_positions < std::max(rc.train.max_tgt_len + 1, rc.decode.max_len)) {
        problems.push_back("model.max_positions is smaller than the longest decoder input");
    }

    if (!problems.empty()) {
        std::string msg = "invalid run config:";
        for (const std::string& p : problems) {
            msg += "\n  " + p;
        }
        throw ConfigError(msg);
    }
    return rc;
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open " + path);
    }
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        throw FormatError(path + ": not valid JSON");
    }
    return j;
}

} // namespace codesum::cli
