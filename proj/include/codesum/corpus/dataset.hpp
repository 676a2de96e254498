#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "codesum/corpus/example.hpp"

namespace codesum {

/// One line of a data file: {"code": "...", "summary": "..."}.
struct Record {
    std::string code;
    std::string summary;
};

std::vector<Record> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, const std::vector<Record>& records);

struct TokenizedRecord {
    std::vector<std::string> code;
    std::vector<std::string> summary;
};

/// Sub-token split code and lowercased summary tokens.
TokenizedRecord tokenize_record(const Record& record);
std::vector<TokenizedRecord> tokenize_records(const std::vector<Record>& records);

/// The code (resp. summary) side of every record, for build_vocabulary.
std::vector<std::vector<std::string>> code_side(const std::vector<TokenizedRecord>& records);
std::vector<std::vector<std::string>> summary_side(const std::vector<TokenizedRecord>& records);

std::vector<Example> encode_all(const std::vector<TokenizedRecord>& records, const Vocabulary& src_vocab,
                                const Vocabulary& tgt_vocab);

} // namespace codesum
