#include "codesum/corpus/subtoken.hpp"

#include <cctype>
#include <sstream>

namespace codesum {

namespace {

bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
bool is_lower(char c) { return std::islower(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) {
                out.push_back(std::move(current));
                current.clear();
            }
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) {
        out.push_back(std::move(current));
    }
    return out;
}

} // namespace

std::vector<std::string> split_subtokens(std::string_view token) {
    std::vector<std::string> parts;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            parts.push_back(std::move(current));
            current.clear();
        }
    };
    for (std::size_t i = 0; i < token.size(); ++i) {
        const char c = token[i];
        if (c == '_') {
            flush();
            continue;
        }
        if (i > 0 && is_upper(c)) {
            const char prev = token[i - 1];
            const bool after_lower = is_lower(prev) || is_digit(prev);
            const bool run_end = is_upper(prev) && i + 1 < token.size() && is_lower(token[i + 1]);
            if (after_lower || run_end) {
                flush();
            }
        }
        current.push_back(lower(c));
    }
    flush();
    return parts;
}

std::vector<std::string> tokenize_code(std::string_view code) {
    std::vector<std::string> out;
    for (const std::string& word : split_whitespace(code)) {
        for (std::string& piece : split_subtokens(word)) {
            out.push_back(std::move(piece));
        }
    }
    return out;
}

std::vector<std::string> tokenize_summary(std::string_view summary) {
    std::vector<std::string> out = split_whitespace(summary);
    for (std::string& w : out) {
        for (char& c : w) {
            c = lower(c);
        }
    }
    return out;
}

} // namespace codesum
