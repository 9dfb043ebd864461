#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emix/util.hpp"

namespace emix {

// One replacement table: keys matched case-insensitively, longest key first.
struct RuleMap {
    // (lowercased key, replacement), sorted by descending key length then key.
    std::vector<std::pair<std::string, std::string>> entries;

    static RuleMap from_pairs(std::vector<std::pair<std::string, std::string>> pairs) {
        RuleMap m;
        for (auto& [k, v] : pairs) {
            if (k.empty()) throw std::runtime_error("empty rule key");
            m.entries.emplace_back(to_lower(k), std::move(v));
        }
        std::sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) {
            if (a.first.size() != b.first.size()) return a.first.size() > b.first.size();
            return a.first < b.first;
        });
        return m;
    }

    bool empty() const { return entries.empty(); }
};

// Rule file: `key<TAB>value` per line, '#' starts a comment line.
inline RuleMap load_rule_file(const std::string& path) {
    std::vector<std::pair<std::string, std::string>> pairs;
    auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view line = trim(lines[i]);
        if (line.empty() || line.front() == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string_view::npos)
            throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": expected key<TAB>value");
        std::string key(trim(line.substr(0, tab)));
        std::string value(trim(line.substr(tab + 1)));
        if (key.empty()) throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": empty key");
        pairs.emplace_back(std::move(key), std::move(value));
    }
    return RuleMap::from_pairs(std::move(pairs));
}

struct NormalizationRules {
    RuleMap contractions;
    RuleMap acronyms;
    RuleMap symbols;
    RuleMap spelling;
};

namespace detail {

inline bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

inline bool ci_match_at(std::string_view text, std::size_t pos, std::string_view lower_key) {
    if (pos + lower_key.size() > text.size()) return false;
    for (std::size_t i = 0; i < lower_key.size(); ++i)
        if (static_cast<char>(std::tolower(static_cast<unsigned char>(text[pos + i]))) != lower_key[i]) return false;
    return true;
}

// One left-to-right pass; replaced text is emitted verbatim and never rescanned.
inline std::string apply_rule_map(std::string_view text, const RuleMap& map, bool word_boundaries) {
    if (map.empty()) return std::string(text);
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        bool at_boundary = !word_boundaries || i == 0 || !is_word_char(static_cast<unsigned char>(text[i - 1]));
        if (at_boundary) {
            bool matched = false;
            for (const auto& [key, value] : map.entries) {
                if (!ci_match_at(text, i, key)) continue;
                std::size_t end = i + key.size();
                if (word_boundaries && end < text.size() && is_word_char(static_cast<unsigned char>(text[end])))
                    continue;
                out += value;
                i = end;
                matched = true;
                break;
            }
            if (matched) continue;
        }
        out += text[i++];
    }
    return out;
}

}  // namespace detail

// Contractions, then spelling, then acronyms, then symbol replacements.
inline std::string normalize(std::string_view text, const NormalizationRules& rules) {
    std::string s = detail::apply_rule_map(text, rules.contractions, true);
    s = detail::apply_rule_map(s, rules.spelling, true);
    s = detail::apply_rule_map(s, rules.acronyms, true);
    s = detail::apply_rule_map(s, rules.symbols, false);
    return s;
}

struct TokenizedTweet {
    std::vector<std::string> tokens;
    std::vector<std::string> hashtags;  // exactly the tokens beginning with '#'
    int emoticon_count = 0;
};

namespace detail {

inline bool is_punct_char(unsigned char c) { return c < 0x80 && !std::isalnum(c) && !std::isspace(c); }

inline std::size_t match_url(std::string_view s, std::size_t i) {
    auto rest = s.substr(i);
    std::size_t head = 0;
    if (rest.starts_with("http://") || rest.starts_with("https://"))
        head = rest.find("//") + 2;
    else if (rest.starts_with("www."))
        head = 4;
    else
        return 0;
    std::size_t j = head;
    while (j < rest.size() && !std::isspace(static_cast<unsigned char>(rest[j]))) ++j;
    return j > head ? j : 0;
}

inline bool is_eye_char(char c) { return c == ':' || c == ';' || c == '=' || c == '8'; }
inline bool is_nose_char(char c) { return c == '-' || c == '~' || c == '^' || c == 'o' || c == '*' || c == '\''; }
inline bool is_mouth_char(char c) {
    switch (c) {
        case ')': case '(': case ']': case '[': case '}': case '{':
        case 'D': case 'd': case 'P': case 'p': case 'O': case 'o':
        case '3': case '/': case '\\': case '|': case '*': case 'S': case 's':
            return true;
        default:
            return false;
    }
}

// Western emoticons: optional '>' + eyes + optional nose + mouth run, hearts,
// and the reversed form whose mouth is a parenthesis, e.g. "(-:".
inline std::size_t match_emoticon(std::string_view s, std::size_t i) {
    std::size_t n = s.size();
    if (s.substr(i).starts_with("<3")) return 2;
    if (s.substr(i).starts_with("</3")) return 3;
    std::size_t j = i;
    if (j < n && s[j] == '>') ++j;
    if (j < n && is_eye_char(s[j])) {
        ++j;
        if (j < n && is_nose_char(s[j]) && j + 1 < n && is_mouth_char(s[j + 1])) ++j;
        if (j < n && is_mouth_char(s[j])) {
            char mouth = s[j];
            while (j < n && s[j] == mouth) ++j;
            return j - i;
        }
        return 0;
    }
    // reversed: "(:" or ")-:" style
    j = i;
    if (j < n && (s[j] == '(' || s[j] == ')')) {
        ++j;
        if (j < n && is_nose_char(s[j]) && j + 1 < n && is_eye_char(s[j + 1])) ++j;
        if (j < n && is_eye_char(s[j])) return j + 1 - i;
    }
    return 0;
}

inline std::size_t match_handle(std::string_view s, std::size_t i, char sigil) {
    if (s[i] != sigil) return 0;
    std::size_t j = i + 1;
    while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
    return j > i + 1 ? j - i : 0;
}

inline std::size_t match_number(std::string_view s, std::size_t i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return 0;
    std::size_t j = i;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    while (j + 1 < s.size() && (s[j] == '.' || s[j] == ',') && std::isdigit(static_cast<unsigned char>(s[j + 1]))) {
        ++j;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    }
    return j - i;
}

inline bool is_letter_char(unsigned char c) { return std::isalpha(c) || c >= 0x80; }

inline std::size_t match_word(std::string_view s, std::size_t i) {
    if (!is_letter_char(static_cast<unsigned char>(s[i]))) return 0;
    std::size_t j = i;
    while (j < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[j]);
        if (is_letter_char(c)) {
            ++j;
        } else if ((c == '\'' || c == '-') && j + 1 < s.size() &&
                   is_letter_char(static_cast<unsigned char>(s[j + 1]))) {
            ++j;
        } else {
            break;
        }
    }
    return j - i;
}

inline std::size_t match_punct_run(std::string_view s, std::size_t i) {
    std::size_t j = i;
    while (j < s.size() && is_punct_char(static_cast<unsigned char>(s[j]))) ++j;
    return j - i;
}

}  // namespace detail

// Segments every non-whitespace character into exactly one token.
inline TokenizedTweet tokenize(std::string_view text) {
    TokenizedTweet out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t len;
        bool emoticon = false;
        if ((len = detail::match_url(text, i)) > 0) {
        } else if ((len = detail::match_emoticon(text, i)) > 0) {
            emoticon = true;
        } else if ((len = detail::match_handle(text, i, '@')) > 0) {
        } else if ((len = detail::match_handle(text, i, '#')) > 0) {
        } else if ((len = detail::match_number(text, i)) > 0) {
        } else if ((len = detail::match_word(text, i)) > 0) {
        } else if ((len = detail::match_punct_run(text, i)) > 0) {
        } else {
            len = 1;
        }
        out.tokens.emplace_back(text.substr(i, len));
        if (emoticon) ++out.emoticon_count;
        i += len;
    }
    for (const std::string& t : out.tokens)
        if (t.front() == '#') out.hashtags.push_back(t);
    return out;
}

}  // namespace emix
