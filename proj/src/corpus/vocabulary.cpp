#include "codesum/corpus/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "codesum/errors.hpp"

namespace codesum {

const std::vector<std::string>& Vocabulary::special_tokens() {
    static const std::vector<std::string> specials{"<pad>", "<unk>", "<s>", "</s>"};
    return specials;
}

Vocabulary::Vocabulary() {
    for (const std::string& s : special_tokens()) {
        token_to_id_.emplace(s, static_cast<std::int64_t>(id_to_token_.size()));
        id_to_token_.push_back(s);
    }
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    for (const std::string& t : tokens) {
        if (t.empty() || v.token_to_id_.contains(t)) {
            throw ContractError("vocabulary token '" + t + "' is empty or duplicated");
        }
        v.token_to_id_.emplace(t, static_cast<std::int64_t>(v.id_to_token_.size()));
        v.id_to_token_.push_back(t);
    }
    return v;
}

std::int64_t Vocabulary::id(const std::string& token) const {
    const auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::int64_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
        throw ContractError("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(id_to_token_.size()));
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write vocabulary file " + path.string());
    }
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
        out << id_to_token_[i] << '\t' << i << '\n';
    }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot read vocabulary file " + path.string());
    }
    std::vector<std::string> tokens;
    std::string line;
    std::size_t expected = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos) {
            throw FormatError(path.string() + ": line " + std::to_string(expected + 1) + " has no tab");
        }
        const std::string token = line.substr(0, tab);
        std::size_t id = 0;
        try {
            id = std::stoul(line.substr(tab + 1));
        } catch (const std::exception&) {
            throw FormatError(path.string() + ": bad id on line " + std::to_string(expected + 1));
        }
        if (id != expected) {
            throw FormatError(path.string() + ": ids must be consecutive from 0");
        }
        if (id < kNumSpecials) {
            if (token != special_tokens()[id]) {
                throw FormatError(path.string() + ": special token mismatch at id " + std::to_string(id));
            }
        } else {
            tokens.push_back(token);
        }
        ++expected;
    }
    if (expected < kNumSpecials) {
        throw FormatError(path.string() + ": missing special tokens");
    }
    try {
        return from_tokens(tokens);
    } catch (const ContractError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::uint64_t Vocabulary::fingerprint() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const std::string& t : id_to_token_) {
        for (unsigned char c : t) {
            h ^= c;
            h *= 0x100000001B3ULL;
        }
        h ^= 0xFF;
        h *= 0x100000001B3ULL;
    }
    return h;
}

Vocabulary build_vocabulary(std::span<const std::vector<std::string>> corpus, std::size_t max_size,
                            std::size_t min_count) {
    if (max_size <= Vocabulary::kNumSpecials) {
        throw ConfigError("vocabulary max_size must exceed 4, got " + std::to_string(max_size));
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& tokens : corpus) {
        for (const std::string& t : tokens) {
            ++counts[t];
        }
    }
    if (counts.empty()) {
        throw ConfigError("cannot build a vocabulary from an empty corpus");
    }
    for (const std::string& s : Vocabulary::special_tokens()) {
        counts.erase(s);
    }
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (auto& [token, count] : counts) {
        if (count >= min_count) {
            ranked.emplace_back(token, count);
        }
    }
    // std::map iteration is lexicographic, so a stable sort by count keeps
    // that order among ties.
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    const std::size_t keep = std::min(ranked.size(), max_size - Vocabulary::kNumSpecials);
    std::vector<std::string> tokens;
    tokens.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        tokens.push_back(ranked[i].first);
    }
    return Vocabulary::from_tokens(tokens);
}

} // namespace codesum
