#include "codesum/corpus/dataset.hpp"

#include <fstream>

#include "codesum/corpus/subtoken.hpp"
#include "codesum/errors.hpp"
#include "json.hpp"

namespace codesum {

std::vector<Record> read_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot read data file " + path.string());
    }
    std::vector<Record> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            records.push_back(Record{j.at("code").get<std::string>(), j.at("summary").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

void write_records(const std::filesystem::path& path, const std::vector<Record>& records) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write data file " + path.string());
    }
    for (const Record& r : records) {
        out << nlohmann::json{{"code", r.code}, {"summary", r.summary}}.dump() << '\n';
    }
}

TokenizedRecord tokenize_record(const Record& record) {
    return TokenizedRecord{tokenize_code(record.code), tokenize_summary(record.summary)};
}

std::vector<TokenizedRecord> tokenize_records(const std::vector<Record>& records) {
    std::vector<TokenizedRecord> out;
    out.reserve(records.size());
    for (const Record& r : records) {
        out.push_back(tokenize_record(r));
    }
    return out;
}

std::vector<std::vector<std::string>> code_side(const std::vector<TokenizedRecord>& records) {
    std::vector<std::vector<std::string>> out;
    out.reserve(records.size());
    for (const TokenizedRecord& r : records) {
        out.push_back(r.code);
    }
    return out;
}

std::vector<std::vector<std::string>> summary_side(const std::vector<TokenizedRecord>& records) {
    std::vector<std::vector<std::string>> out;
    out.reserve(records.size());
    for (const TokenizedRecord& r : records) {
        out.push_back(r.summary);
    }
    return out;
}

std::vector<Example> encode_all(const std::vector<TokenizedRecord>& records, const Vocabulary& src_vocab,
                                const Vocabulary& tgt_vocab) {
    std::vector<Example> out;
    out.reserve(records.size());
    for (const TokenizedRecord& r : records) {
        out.push_back(encode_with_copy(r.code, r.summary, src_vocab, tgt_vocab));
    }
    return out;
}

} // namespace codesum
