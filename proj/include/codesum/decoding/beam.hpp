#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "codesum/corpus/example.hpp"
#include "codesum/transformer/model.hpp"

namespace codesum {

/// A decoded sequence in the extended target space. BOS is never stored; a
/// hypothesis that ended on EOS keeps it as its last token. Truncated ones
/// hit max_len without emitting EOS and are finished by force.
struct Hypothesis {
    std::vector<std::int64_t> tokens;
    double log_prob = 0.0;
    bool finished = false;
    bool truncated = false;
};

/// Next-token log-probabilities for a set of live rows. Rows are the parallel
/// prefixes the search currently tracks.
class StepScorer {
  public:
    virtual ~StepScorer() = default;
    /// One token per row (BOS on the first call); returns rows x vocab_size().
    virtual std::vector<std::vector<double>> step(const std::vector<std::int64_t>& tokens) = 0;
    /// Continue from rows `parents` of the previous step, in that order.
    virtual void reorder(const std::vector<std::size_t>& parents) = 0;
    virtual std::size_t vocab_size() const = 0;
};

struct BeamConfig {
    std::size_t beam_size = 4;
    std::size_t max_len = 30;
    /// Final ranking by log_prob / length^alpha; 0 ranks by log-probability.
    double length_alpha = 0.0;
};

double hypothesis_score(const Hypothesis& h, double alpha);

/// Each step expands every live row by every token and keeps the beam_size
/// best candidates. Candidates ending in EOS leave the beam and are held as
/// finished; the others stay live. Search ends when no row is live, at
/// max_len, or (alpha == 0) once no live row can beat the best finished
/// one. Ties prefer the earlier row, then the smaller token id.
Hypothesis beam_search(StepScorer& scorer, const BeamConfig& config);

/// Argmax decoding, ties to the smallest id.
Hypothesis greedy_decode(StepScorer& scorer, std::size_t max_len);

/// Model-backed scorer for one source sequence.
class ModelScorer : public StepScorer {
  public:
    ModelScorer(const Model& model, const std::vector<std::int64_t>& src_ids,
                const std::vector<std::int64_t>& src_extended_ids, std::size_t max_oov);
    std::vector<std::vector<double>> step(const std::vector<std::int64_t>& tokens) override;
    void reorder(const std::vector<std::size_t>& parents) override;
    std::size_t vocab_size() const override { return decoder_.extended_vocab_size(); }

  private:
    IncrementalDecoder decoder_;
};

/// Decodes one example with its source cut to max_src_len tokens.
Hypothesis decode_example(const Model& model, const Example& example, const BeamConfig& config,
                          std::size_t max_src_len);

/// Summary tokens for a hypothesis: BOS/EOS dropped, in-vocabulary ids looked
/// up, extended ids taken from oov_list. Throws ContractError on ids outside
/// the extended vocabulary.
std::vector<std::string> resolve_copies(const Hypothesis& hypothesis, const Vocabulary& tgt_vocab,
                                        const std::vector<std::string>& oov_list);

} // namespace codesum
