#include "codesum/corpus/synthetic.hpp"

#include <array>

namespace codesum::synthetic {

namespace {

const std::array<const char*, 12> kFillers{"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"};
const std::array<const char*, 5> kModifiers{"public", "private", "static", "final", "synchronized"};

std::string filler(Rng& rng) { return kFillers[rng.below(kFillers.size())]; }

std::string fresh_identifier(Rng& rng, std::unordered_set<std::string>& used) {
    static constexpr const char* kLetters = "abcdefghijklmnopqrstuvwxyz";
    while (true) {
        const std::size_t len = 5 + rng.below(4);
        std::string id;
        for (std::size_t i = 0; i < len; ++i) {
            id.push_back(kLetters[rng.below(26)]);
        }
        if (used.insert(id).second) {
            return id;
        }
    }
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (const std::string& w : words) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += w;
    }
    return out;
}

} // namespace

std::vector<Record> identifier_copy(std::size_t count, Rng& rng, std::unordered_set<std::string>& used) {
    std::vector<Record> out;
    out.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        const std::string id = fresh_identifier(rng, used);
        std::vector<std::string> code;
        const std::size_t mods = rng.below(4);
        for (std::size_t m = 0; m < mods; ++m) {
            code.emplace_back(kModifiers[rng.below(kModifiers.size())]);
        }
        std::vector<std::string> body;
        std::string summary;
        switch (rng.below(4)) {
        case 0:
            body = {"int", "get", id, "(", ")", "{", "return", id, ";", "}"};
            summary = "returns the " + id;
            break;
        case 1:
            body = {"void", "set", id, "(", "int", "value", ")", "{", "this", ".", id, "=", "value", ";", "}"};
            summary = "sets the " + id;
            break;
        case 2:
            body = {"void", "remove", id, "(", ")", "{", id, "=", "null", ";", "}"};
            summary = "removes the " + id;
            break;
        default:
            body = {"boolean", "has", id, "(", ")", "{", "return", id, "!=", "null", ";", "}"};
            summary = "checks whether " + id + " exists";
            break;
        }
        code.insert(code.end(), body.begin(), body.end());
        out.push_back(Record{join(code), summary});
    }
    return out;
}

std::vector<Record> relative_offset(std::size_t count, Rng& rng, std::size_t min_prefix, std::size_t max_prefix) {
    std::vector<Record> out;
    out.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        const std::size_t prefix = min_prefix + rng.below(max_prefix - min_prefix + 1);
        std::vector<std::string> code;
        for (std::size_t i = 0; i < prefix; ++i) {
            code.push_back(filler(rng));
        }
        code.emplace_back("mark");
        std::vector<std::string> target;
        for (int i = 0; i < 3; ++i) {
            target.push_back(filler(rng));
            code.push_back(target.back());
        }
        for (int i = 0; i < 2; ++i) {
            code.push_back(filler(rng));
        }
        out.push_back(Record{join(code), join(target)});
    }
    return out;
}

std::vector<Record> direction(std::size_t count, Rng& rng) {
    std::vector<Record> out;
    out.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        const std::size_t len = 5 + rng.below(5);
        const std::size_t pos = 1 + rng.below(len - 2);
        std::vector<std::string> code(len);
        for (std::size_t i = 0; i < len; ++i) {
            code[i] = filler(rng);
        }
        code[pos] = "mark";
        while (code[pos + 1] == code[pos - 1]) {
            code[pos + 1] = filler(rng);
        }
        out.push_back(Record{join(code), code[pos + 1] + " " + code[pos - 1]});
    }
    return out;
}

Bundle make_bundle(std::uint64_t seed) {
    Bundle b;
    const Rng root(seed);
    std::unordered_set<std::string> used;
    Rng copy = root.split("copy");
    b.copy_train = identifier_copy(1000, copy, used);
    b.copy_valid = identifier_copy(100, copy, used);
    b.copy_test = identifier_copy(200, copy, used);

    Rng offset = root.split("offset");
    b.offset_train = relative_offset(1000, offset, 0, 8);
    b.offset_valid = relative_offset(100, offset, 0, 8);
    b.offset_test = relative_offset(200, offset, 12, 24);

    Rng dir = root.split("direction");
    b.direction_train = direction(1000, dir);
    b.direction_valid = direction(100, dir);
    b.direction_test = direction(200, dir);

    Rng over = root.split("overfit");
    b.overfit = identifier_copy(64, over, used);
    return b;
}

} // namespace codesum::synthetic
