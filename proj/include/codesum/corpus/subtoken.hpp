#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace codesum {

/// Splits a CamelCase / snake_case code token into lowercase sub-tokens.
///
/// Boundaries: underscores; lowercase or digit followed by uppercase; an
/// uppercase letter followed by a lowercase one inside an uppercase run
/// ("HTTPResponse" -> "http", "response"). Empty fragments are dropped.
/// Tokens made only of underscores yield nothing; other punctuation passes
/// through lowercased.
std::vector<std::string> split_subtokens(std::string_view token);

/// Whitespace tokenisation followed by sub-token splitting.
std::vector<std::string> tokenize_code(std::string_view code);

/// Whitespace tokenisation with lowercasing.
std::vector<std::string> tokenize_summary(std::string_view summary);

} // namespace codesum
