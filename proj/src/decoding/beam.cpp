#include "codesum/decoding/beam.hpp"

#include <algorithm>
#include <cmath>

#include "codesum/errors.hpp"

namespace codesum {

namespace {

struct Candidate {
    double log_prob;
    std::size_t row;
    std::int64_t token;
};

bool better(const Candidate& a, const Candidate& b) {
    if (a.log_prob != b.log_prob) {
        return a.log_prob > b.log_prob;
    }
    if (a.row != b.row) {
        return a.row < b.row;
    }
    return a.token < b.token;
}

void check_scores(const std::vector<std::vector<double>>& scores, std::size_t rows, std::size_t vocab) {
    if (scores.size() != rows) {
        throw DimensionError("scorer returned " + std::to_string(scores.size()) + " rows, expected " +
                             std::to_string(rows));
    }
    for (const auto& row : scores) {
        if (row.size() != vocab) {
            throw DimensionError("scorer row has " + std::to_string(row.size()) + " entries, expected " +
                                 std::to_string(vocab));
        }
    }
    if (vocab <= static_cast<std::size_t>(Vocabulary::kEos)) {
        throw ContractError("scorer vocabulary does not contain EOS");
    }
}

} // namespace

double hypothesis_score(const Hypothesis& h, double alpha) {
    if (alpha == 0.0) {
        return h.log_prob;
    }
    const double length = static_cast<double>(std::max<std::size_t>(h.tokens.size(), 1));
    return h.log_prob / std::pow(length, alpha);
}

Hypothesis beam_search(StepScorer& scorer, const BeamConfig& config) {
    if (config.beam_size < 1) {
        throw ConfigError("beam_size must be at least 1");
    }
    if (config.max_len < 1) {
        throw ConfigError("max_len must be at least 1");
    }
    std::vector<Hypothesis> live(1);
    std::vector<Hypothesis> finished;
    std::vector<std::int64_t> feed{Vocabulary::kBos};
    for (std::size_t t = 0; t < config.max_len; ++t) {
        const auto scores = scorer.step(feed);
        const std::size_t vocab = scorer.vocab_size();
        check_scores(scores, live.size(), vocab);

        std::vector<Candidate> cands;
        cands.reserve(live.size() * vocab);
        for (std::size_t r = 0; r < live.size(); ++r) {
            for (std::size_t v = 0; v < vocab; ++v) {
                cands.push_back({live[r].log_prob + scores[r][v], r, static_cast<std::int64_t>(v)});
            }
        }
        const std::size_t keep = std::min(config.beam_size, cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);

        const bool last_step = t + 1 == config.max_len;
        std::vector<Hypothesis> next;
        std::vector<std::size_t> parents;
        for (std::size_t i = 0; i < keep; ++i) {
            const Candidate& c = cands[i];
            Hypothesis h{live[c.row].tokens, c.log_prob, false, false};
            h.tokens.push_back(c.token);
            if (c.token == Vocabulary::kEos) {
                h.finished = true;
                finished.push_back(std::move(h));
            } else if (last_step) {
                h.finished = h.truncated = true;
                finished.push_back(std::move(h));
            } else {
                next.push_back(std::move(h));
                parents.push_back(c.row);
            }
        }
        if (next.empty()) {
            break;
        }
        // Extending a prefix only lowers its log-probability.
        if (config.length_alpha == 0.0 && !finished.empty()) {
            double best = finished.front().log_prob;
            for (const Hypothesis& f : finished) {
                best = std::max(best, f.log_prob);
            }
            if (best >= next.front().log_prob) {
                break;
            }
        }
        scorer.reorder(parents);
        live = std::move(next);
        feed.clear();
        for (const Hypothesis& h : live) {
            feed.push_back(h.tokens.back());
        }
    }

    const Hypothesis* best = &finished.front();
    for (const Hypothesis& f : finished) {
        if (hypothesis_score(f, config.length_alpha) > hypothesis_score(*best, config.length_alpha)) {
            best = &f;
        }
    }
    return *best;
}

Hypothesis greedy_decode(StepScorer& scorer, std::size_t max_len) {
    if (max_len < 1) {
        throw ConfigError("max_len must be at least 1");
    }
    Hypothesis h;
    std::int64_t feed = Vocabulary::kBos;
    for (std::size_t t = 0; t < max_len; ++t) {
        const auto scores = scorer.step({feed});
        check_scores(scores, 1, scorer.vocab_size());
        const auto& row = scores.front();
        const auto arg = std::max_element(row.begin(), row.end()) - row.begin();
        h.log_prob += row[static_cast<std::size_t>(arg)];
        h.tokens.push_back(arg);
        if (arg == Vocabulary::kEos) {
            h.finished = true;
            return h;
        }
        feed = arg;
    }
    h.finished = h.truncated = true;
    return h;
}

ModelScorer::ModelScorer(const Model& model, const std::vector<std::int64_t>& src_ids,
                         const std::vector<std::int64_t>& src_extended_ids, std::size_t max_oov)
    : decoder_(model, src_ids, src_extended_ids, max_oov) {}

std::vector<std::vector<double>> ModelScorer::step(const std::vector<std::int64_t>& tokens) {
    const Tensor probs = decoder_.step(tokens);
    const std::size_t rows = probs.dim(0);
    const std::size_t vocab = probs.dim(1);
    const auto p = probs.data();
    std::vector<std::vector<double>> out(rows, std::vector<double>(vocab));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t v = 0; v < vocab; ++v) {
            out[r][v] = std::log(std::max(p[r * vocab + v], 1e-300));
        }
    }
    return out;
}

void ModelScorer::reorder(const std::vector<std::size_t>& parents) { decoder_.reorder(parents); }

Hypothesis decode_example(const Model& model, const Example& example, const BeamConfig& config,
                          std::size_t max_src_len) {
    const std::size_t n = std::min(example.code_ids.size(), max_src_len);
    const std::vector<std::int64_t> src(example.code_ids.begin(), example.code_ids.begin() + n);
    const std::vector<std::int64_t> ext(example.src_extended_ids.begin(), example.src_extended_ids.begin() + n);
    ModelScorer scorer(model, src, ext, example.oov_list.size());
    return beam_search(scorer, config);
}

std::vector<std::string> resolve_copies(const Hypothesis& hypothesis, const Vocabulary& tgt_vocab,
                                        const std::vector<std::string>& oov_list) {
    std::vector<std::string> out;
    for (std::int64_t id : hypothesis.tokens) {
        if (id == Vocabulary::kBos || id == Vocabulary::kEos) {
            continue;
        }
        out.push_back(extended_token(id, tgt_vocab, oov_list));
    }
    return out;
}

} // namespace codesum
