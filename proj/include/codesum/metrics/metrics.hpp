#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace codesum {

using TokenList = std::vector<std::string>;

/// Porter (1980) suffix-stripping stemmer over lowercase ASCII words.
std::string porter_stem(const std::string& word);

/// Corpus BLEU-4 on a 0..100 scale, one reference per hypothesis. Clipped
/// n-gram counts are summed over the corpus; a zero match count for n >= 2
/// is smoothed to 1 / (total_n + 1); brevity penalty exp(1 - r/c) when c < r.
double bleu_corpus(const std::vector<TokenList>& hyps, const std::vector<TokenList>& refs);

std::size_t lcs_length(const TokenList& a, const TokenList& b);

/// ROUGE-L F-measure (beta = 1.2) on 0..1; 0 if either side is empty.
double rouge_l_sentence(const TokenList& hyp, const TokenList& ref);

struct MeteorOptions {
    bool stem = true;
};

/// Exact-then-stem greedy alignment; F_mean = 10PR / (R + 9P), fragmentation
/// penalty 0.5 (chunks / matches)^3. 0..1, 0 without matches.
double meteor_sentence(const TokenList& hyp, const TokenList& ref, const MeteorOptions& options = {});

struct MetricReport {
    double bleu = 0.0;    ///< corpus BLEU-4, 0..100
    double meteor = 0.0;  ///< mean sentence METEOR, 0..100
    double rouge_l = 0.0; ///< mean sentence ROUGE-L F, 0..100
    std::size_t n_examples = 0;
};

/// Throws ContractError on an empty corpus or a length mismatch.
MetricReport evaluate_corpus(const std::vector<TokenList>& hyps, const std::vector<TokenList>& refs);

void to_json(nlohmann::json& j, const MetricReport& r);

} // namespace codesum
