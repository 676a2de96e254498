#include <fstream>
#include <set>

#include "codesum/cli/commands.hpp"
#include "codesum/errors.hpp"

namespace codesum::cli {

namespace {

nlohmann::ordered_json builtin_grid(const std::string& name) {
    if (name == "table3") {
        return nlohmann::ordered_json::parse(R"({"axes": {"source_absolute": [true, false],
                                                          "target_absolute": [true, false]}})");
    }
    if (name == "table4") {
        return nlohmann::ordered_json::parse(R"({"axes": {"k": [8, 16, 32, "2^i"], "directional": [true, false]}})");
    }
    if (name == "table5") {
        return nlohmann::ordered_json::parse(
            R"({"sweeps": [{"d_model": [256, 384, 512, 768]}, {"layers": [3, 6, 9, 12]}]})");
    }
    std::ifstream in(name);
    if (!in) {
        throw ConfigError("grid '" + name + "' is neither table3, table4, table5 nor a readable file");
    }
    nlohmann::ordered_json j = nlohmann::ordered_json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ConfigError(name + ": grid must be a JSON object");
    }
    return j;
}

bool as_bool(const std::string& axis, const nlohmann::json& v) {
    if (!v.is_boolean()) {
        throw ConfigError("axis " + axis + " takes true/false, got " + v.dump());
    }
    return v.get<bool>();
}

std::size_t as_size(const std::string& axis, const nlohmann::json& v) {
    if (!v.is_number_unsigned() || v.get<std::size_t>() == 0) {
        throw ConfigError("axis " + axis + " takes positive integers, got " + v.dump());
    }
    return v.get<std::size_t>();
}

RunConfig apply_cell(const RunConfig& base, const std::vector<std::pair<std::string, nlohmann::json>>& cell) {
    RunConfig rc = base;
    std::optional<nlohmann::json> k;
    for (const auto& [axis, v] : cell) {
        if (axis == "encoder_position") {
            rc.model.encoder_position = parse_encoder_position(v.is_string() ? v.get<std::string>() : v.dump());
        } else if (axis == "decoder_position") {
            rc.model.decoder_position = parse_decoder_position(v.is_string() ? v.get<std::string>() : v.dump());
        } else if (axis == "source_absolute") {
            rc.model.encoder_position = as_bool(axis, v) ? EncoderPosition::absolute : EncoderPosition::none;
        } else if (axis == "target_absolute") {
            rc.model.decoder_position = as_bool(axis, v) ? DecoderPosition::absolute : DecoderPosition::none;
        } else if (axis == "directional") {
            rc.model.encoder_position =
                as_bool(axis, v) ? EncoderPosition::relative_directional : EncoderPosition::relative_undirected;
        } else if (axis == "use_copy") {
            rc.model.use_copy = as_bool(axis, v);
        } else if (axis == "d_model") {
            rc.model.d_model = as_size(axis, v);
            rc.model.d_ff = 4 * rc.model.d_model;
        } else if (axis == "layers") {
            rc.model.layers = as_size(axis, v);
        } else if (axis == "k") {
            k = v;
        } else {
            throw ConfigError("unknown ablation axis '" + axis + "'");
        }
    }
    // Layer-wise distances depend on the final layer count.
    if (k) {
        if (k->is_string() && k->get<std::string>() == "2^i") {
            rc.model.layer_clip.clear();
            for (std::size_t i = 0; i < rc.model.layers; ++i) {
                rc.model.layer_clip.push_back(std::size_t{2} << i);
            }
        } else {
            rc.model.clip = as_size("k", *k);
            rc.model.layer_clip.clear();
        }
    }
    return rc;
}

void product(const std::vector<std::pair<std::string, std::vector<nlohmann::json>>>& axes, std::size_t at,
             std::vector<std::pair<std::string, nlohmann::json>>& current,
             std::vector<std::vector<std::pair<std::string, nlohmann::json>>>& out) {
    if (at == axes.size()) {
        out.push_back(current);
        return;
    }
    for (const nlohmann::json& v : axes[at].second) {
        current.emplace_back(axes[at].first, v);
        product(axes, at + 1, current, out);
        current.pop_back();
    }
}

} // namespace

std::vector<AblationCell> expand_grid(const std::string& grid, const RunConfig& base) {
    const nlohmann::ordered_json spec = builtin_grid(grid);
    std::vector<nlohmann::ordered_json> sweeps;
    if (spec.contains("axes")) {
        sweeps.push_back(spec.at("axes"));
    }
    if (spec.contains("sweeps")) {
        for (const auto& s : spec.at("sweeps")) {
            sweeps.push_back(s);
        }
    }
    for (const auto& item : spec.items()) {
        if (item.key() != "axes" && item.key() != "sweeps") {
            throw ConfigError("unknown grid key '" + item.key() + "'");
        }
    }
    if (sweeps.empty()) {
        throw ConfigError("grid has no axes");
    }

    std::vector<AblationCell> cells;
    std::set<std::string> seen;
    for (const auto& sweep : sweeps) {
        if (!sweep.is_object() || sweep.empty()) {
            throw ConfigError("every sweep must be a non-empty object of axis lists");
        }
        std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;
        for (const auto& item : sweep.items()) {
            if (!item.value().is_array() || item.value().empty()) {
                throw ConfigError("axis " + item.key() + " needs a non-empty list of values");
            }
            std::vector<nlohmann::json> values;
            for (const auto& v : item.value()) {
                values.push_back(nlohmann::json::parse(v.dump()));
            }
            axes.emplace_back(item.key(), std::move(values));
        }
        std::vector<std::vector<std::pair<std::string, nlohmann::json>>> combos;
        std::vector<std::pair<std::string, nlohmann::json>> current;
        product(axes, 0, current, combos);
        for (const auto& combo : combos) {
            const RunConfig rc = apply_cell(base, combo);
            nlohmann::json key;
            to_json(key, rc.model);
            if (!seen.insert(key.dump()).second) {
                continue;
            }
            cells.push_back({combo, rc});
        }
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        RunConfig& rc = cells[i].config;
        rc.train.seed = base.train.seed ^ static_cast<std::uint64_t>(i);
        rc.output_dir = (std::filesystem::path(base.output_dir) / ("cell_" + std::to_string(i))).string();
        // Full validation of every cell happens before any of them trains.
        rc = resolve_run_config(to_json(rc));
    }
    return cells;
}

} // namespace codesum::cli
