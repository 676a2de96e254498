#include <array>
#include <string_view>

#include "codesum/metrics/metrics.hpp"

namespace codesum {

namespace {

// Word being stemmed; `w` is shortened in place.
class Stemmer {
  public:
    explicit Stemmer(std::string word) : w(std::move(word)) {}

    std::string run() {
        step1a();
        step1b();
        step1c();
        step2();
        step3();
        step4();
        step5();
        return w;
    }

  private:
    std::string w;

    bool consonant(std::size_t i) const {
        switch (w[i]) {
        case 'a':
        case 'e':
        case 'i':
        case 'o':
        case 'u':
            return false;
        case 'y':
            return i == 0 || !consonant(i - 1);
        default:
            return true;
        }
    }

    // m in [C](VC)^m[V] for the first `len` letters.
    std::size_t measure(std::size_t len) const {
        std::size_t i = 0;
        while (i < len && consonant(i)) {
            ++i;
        }
        std::size_t m = 0;
        while (i < len) {
            while (i < len && !consonant(i)) {
                ++i;
            }
            if (i == len) {
                break;
            }
            while (i < len && consonant(i)) {
                ++i;
            }
            ++m;
        }
        return m;
    }

    bool has_vowel(std::size_t len) const {
        for (std::size_t i = 0; i < len; ++i) {
            if (!consonant(i)) {
                return true;
            }
        }
        return false;
    }

    bool double_consonant(std::size_t len) const {
        return len >= 2 && w[len - 1] == w[len - 2] && consonant(len - 1);
    }

    // consonant-vowel-consonant ending, last consonant not w, x or y.
    bool cvc(std::size_t len) const {
        if (len < 3 || !consonant(len - 1) || consonant(len - 2) || !consonant(len - 3)) {
            return false;
        }
        const char c = w[len - 1];
        return c != 'w' && c != 'x' && c != 'y';
    }

    bool ends(std::string_view s) const { return w.size() >= s.size() && std::string_view(w).ends_with(s); }

    std::size_t stem_len(std::string_view suffix) const { return w.size() - suffix.size(); }

    void replace(std::string_view suffix, std::string_view with) {
        w.resize(stem_len(suffix));
        w += with;
    }

    struct Rule {
        std::string_view suffix;
        std::string_view with;
    };

    // Longest matching suffix wins; it is replaced when the stem measure
    // exceeds `min_m`. Later rules are not tried once a suffix matched.
    template <std::size_t N>
    void apply_longest(const std::array<Rule, N>& rules, std::size_t min_m) {
        const Rule* best = nullptr;
        for (const Rule& r : rules) {
            if (ends(r.suffix) && (!best || r.suffix.size() > best->suffix.size())) {
                best = &r;
            }
        }
        if (best && measure(stem_len(best->suffix)) > min_m) {
            replace(best->suffix, best->with);
        }
    }

    void step1a() {
        if (ends("sses")) {
            replace("sses", "ss");
        } else if (ends("ies")) {
            replace("ies", "i");
        } else if (ends("ss")) {
        } else if (ends("s")) {
            replace("s", "");
        }
    }

    void step1b() {
        if (ends("eed")) {
            if (measure(stem_len("eed")) > 0) {
                replace("eed", "ee");
            }
            return;
        }
        std::string_view removed;
        if (ends("ed") && has_vowel(stem_len("ed"))) {
            removed = "ed";
        } else if (ends("ing") && has_vowel(stem_len("ing"))) {
            removed = "ing";
        } else {
            return;
        }
        replace(removed, "");
        if (ends("at") || ends("bl") || ends("iz")) {
            w += 'e';
        } else if (double_consonant(w.size())) {
            const char c = w.back();
            if (c != 'l' && c != 's' && c != 'z') {
                w.pop_back();
            }
        } else if (measure(w.size()) == 1 && cvc(w.size())) {
            w += 'e';
        }
    }

    void step1c() {
        if (ends("y") && has_vowel(stem_len("y"))) {
            w.back() = 'i';
        }
    }

    void step2() {
        static constexpr std::array<Rule, 20> rules{{{"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},
                                                     {"anci", "ance"},   {"izer", "ize"},    {"abli", "able"},
                                                     {"alli", "al"},     {"entli", "ent"},   {"eli", "e"},
                                                     {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
                                                     {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"},
                                                     {"fulness", "ful"}, {"ousness", "ous"}, {"aliti", "al"},
                                                     {"iviti", "ive"},   {"biliti", "ble"}}};
        apply_longest(rules, 0);
    }

    void step3() {
        static constexpr std::array<Rule, 7> rules{{{"icate", "ic"},
                                                    {"ative", ""},
                                                    {"alize", "al"},
                                                    {"iciti", "ic"},
                                                    {"ical", "ic"},
                                                    {"ful", ""},
                                                    {"ness", ""}}};
        apply_longest(rules, 0);
    }

    void step4() {
        static constexpr std::array<std::string_view, 19> suffixes{
            "al",   "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
            "ent",  "ion",  "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize"};
        std::string_view best;
        for (std::string_view s : suffixes) {
            if (ends(s) && s.size() > best.size()) {
                best = s;
            }
        }
        if (best.empty()) {
            return;
        }
        const std::size_t len = stem_len(best);
        if (measure(len) <= 1) {
            return;
        }
        if (best == "ion" && !(len > 0 && (w[len - 1] == 's' || w[len - 1] == 't'))) {
            return;
        }
        w.resize(len);
    }

    void step5() {
        if (ends("e")) {
            const std::size_t len = stem_len("e");
            const std::size_t m = measure(len);
            if (m > 1 || (m == 1 && !cvc(len))) {
                w.pop_back();
            }
        }
        if (measure(w.size()) > 1 && double_consonant(w.size()) && w.back() == 'l') {
            w.pop_back();
        }
    }
};

} // namespace

std::string porter_stem(const std::string& word) { return Stemmer(word).run(); }

} // namespace codesum
