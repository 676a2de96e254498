#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace codesum {

/// Token <-> id bijection with reserved special ids 0..3.
class Vocabulary {
  public:
    static constexpr std::int64_t kPad = 0;
    static constexpr std::int64_t kUnk = 1;
    static constexpr std::int64_t kBos = 2;
    static constexpr std::int64_t kEos = 3;
    static constexpr std::size_t kNumSpecials = 4;
    static const std::vector<std::string>& special_tokens();

    /// Specials only.
    Vocabulary();

    /// Specials plus `tokens` in order; duplicates or specials are rejected.
    static Vocabulary from_tokens(const std::vector<std::string>& tokens);

    std::size_t size() const { return id_to_token_.size(); }
    bool contains(const std::string& token) const { return token_to_id_.contains(token); }
    /// UNK for unknown tokens.
    std::int64_t id(const std::string& token) const;
    const std::string& token(std::int64_t id) const;
    const std::vector<std::string>& tokens() const { return id_to_token_; }

    /// `token<TAB>id` per line, specials first.
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    /// FNV-1a over the ordered token list.
    std::uint64_t fingerprint() const;

    bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

  private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, std::int64_t> token_to_id_;
};

/// Keeps the (max_size - 4) most frequent tokens with count >= min_count;
/// ties broken lexicographically. Throws ConfigError for max_size <= 4 or an
/// empty corpus.
Vocabulary build_vocabulary(std::span<const std::vector<std::string>> corpus, std::size_t max_size,
                            std::size_t min_count = 1);

} // namespace codesum
