#include "codesum/metrics/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "codesum/errors.hpp"

namespace codesum {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const TokenList& tokens, std::size_t n) {
    NgramCounts counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[TokenList(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                           tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

void check_pairs(const std::vector<TokenList>& hyps, const std::vector<TokenList>& refs) {
    if (hyps.size() != refs.size()) {
        throw ContractError(std::to_string(hyps.size()) + " hypotheses for " + std::to_string(refs.size()) +
                            " references");
    }
    if (hyps.empty()) {
        throw ContractError("cannot score an empty corpus");
    }
}

} // namespace

double bleu_corpus(const std::vector<TokenList>& hyps, const std::vector<TokenList>& refs) {
    check_pairs(hyps, refs);
    constexpr std::size_t kMaxN = 4;
    std::array<std::size_t, kMaxN> matches{};
    std::array<std::size_t, kMaxN> totals{};
    std::size_t hyp_len = 0;
    std::size_t ref_len = 0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
        hyp_len += hyps[s].size();
        ref_len += refs[s].size();
        for (std::size_t n = 1; n <= kMaxN; ++n) {
            const NgramCounts h = ngrams(hyps[s], n);
            const NgramCounts r = ngrams(refs[s], n);
            for (const auto& [gram, count] : h) {
                const auto it = r.find(gram);
                matches[n - 1] += it == r.end() ? 0 : std::min(count, it->second);
                totals[n - 1] += count;
            }
        }
    }
    if (matches[0] == 0) {
        return 0.0;
    }
    double log_sum = 0.0;
    for (std::size_t n = 0; n < kMaxN; ++n) {
        const double p = matches[n] > 0 ? static_cast<double>(matches[n]) / static_cast<double>(totals[n])
                                        : 1.0 / static_cast<double>(totals[n] + 1);
        log_sum += std::log(p);
    }
    const double c = static_cast<double>(hyp_len);
    const double r = static_cast<double>(ref_len);
    const double brevity = c < r ? std::exp(1.0 - r / c) : 1.0;
    return 100.0 * brevity * std::exp(log_sum / kMaxN);
}

std::size_t lcs_length(const TokenList& a, const TokenList& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l_sentence(const TokenList& hyp, const TokenList& ref) {
    if (hyp.empty() || ref.empty()) {
        return 0.0;
    }
    const double lcs = static_cast<double>(lcs_length(hyp, ref));
    if (lcs == 0.0) {
        return 0.0;
    }
    constexpr double kBeta2 = 1.2 * 1.2;
    const double p = lcs / static_cast<double>(hyp.size());
    const double r = lcs / static_cast<double>(ref.size());
    return (1.0 + kBeta2) * p * r / (r + kBeta2 * p);
}

double meteor_sentence(const TokenList& hyp, const TokenList& ref, const MeteorOptions& options) {
    if (hyp.empty() || ref.empty()) {
        return 0.0;
    }
    // ref_of[i] = aligned reference position of hypothesis token i.
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::vector<std::size_t> ref_of(hyp.size(), kNone);
    std::vector<bool> ref_used(ref.size(), false);
    auto align = [&](auto&& key) {
        for (std::size_t i = 0; i < hyp.size(); ++i) {
            if (ref_of[i] != kNone) {
                continue;
            }
            const std::string k = key(hyp[i]);
            for (std::size_t j = 0; j < ref.size(); ++j) {
                if (!ref_used[j] && key(ref[j]) == k) {
                    ref_of[i] = j;
                    ref_used[j] = true;
                    break;
                }
            }
        }
    };
    align([](const std::string& t) { return t; });
    if (options.stem) {
        align([](const std::string& t) { return porter_stem(t); });
    }

    std::size_t m = 0;
    std::size_t chunks = 0;
    std::size_t prev_hyp = kNone;
    std::size_t prev_ref = kNone;
    for (std::size_t i = 0; i < hyp.size(); ++i) {
        if (ref_of[i] == kNone) {
            continue;
        }
        ++m;
        const bool continues = prev_hyp != kNone && prev_hyp + 1 == i && prev_ref + 1 == ref_of[i];
        if (!continues) {
            ++chunks;
        }
        prev_hyp = i;
        prev_ref = ref_of[i];
    }
    if (m == 0) {
        return 0.0;
    }
    const double p = static_cast<double>(m) / static_cast<double>(hyp.size());
    const double r = static_cast<double>(m) / static_cast<double>(ref.size());
    const double f_mean = 10.0 * p * r / (r + 9.0 * p);
    const double frag = static_cast<double>(chunks) / static_cast<double>(m);
    return f_mean * (1.0 - 0.5 * frag * frag * frag);
}

MetricReport evaluate_corpus(const std::vector<TokenList>& hyps, const std::vector<TokenList>& refs) {
    check_pairs(hyps, refs);
    MetricReport report;
    report.n_examples = hyps.size();
    report.bleu = bleu_corpus(hyps, refs);
    double meteor = 0.0;
    double rouge = 0.0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        meteor += meteor_sentence(hyps[i], refs[i]);
        rouge += rouge_l_sentence(hyps[i], refs[i]);
    }
    report.meteor = 100.0 * meteor / static_cast<double>(hyps.size());
    report.rouge_l = 100.0 * rouge / static_cast<double>(hyps.size());
    return report;
}

void to_json(nlohmann::json& j, const MetricReport& r) {
    j = nlohmann::json{{"bleu", r.bleu}, {"meteor", r.meteor}, {"rouge_l", r.rouge_l}, {"n_examples", r.n_examples}};
}

} // namespace codesum
