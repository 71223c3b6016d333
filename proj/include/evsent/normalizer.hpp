#pragma once

// Tweet pre-processing: strip URLs and mentions, unwrap hashtags, expand
// slang/acronyms that are not known English words, lemmatize known words.
// Emoticons pass through every step untouched.

#include <algorithm>
#include <filesystem>
#include <map>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "evsent/corpus.hpp"
#include "evsent/error.hpp"
#include "evsent/io.hpp"
#include "evsent/text.hpp"

namespace evsent {

// The customized acronym dictionary shipped as data/acronyms.tsv.
inline const std::vector<std::pair<std::string, std::string>>& default_acronyms() {
    static const std::vector<std::pair<std::string, std::string>> table{
        {"slug", "meaning"},
        {"ASAP", "As Soon As Possible"},
        {"BF", "Boyfriend"},
        {"bravo", "brave"},
        {"FF", "Friends Forever"},
        {"GF", "Girlfriend"},
        {"HNY", "Happy New Year"},
        {"HUH", "what"},
        {"ICYMI", "In Case You Missed It"},
        {"IYKWIM", "If You Know What I Mean"},
        {"LG", "Local Government"},
        {"LULZ", "Laughs"},
        {"NP", "No Problem"},
        {"OBE", "Overcome By Events"},
        {"OMG", "Oh My God"},
        {"PSA", "Public Service Announcement"},
        {"QOTD", "Quote Of The Day"},
        {"ROFL", "Rolling On Floor Laughing"},
        {"ROTFL", "Rolling On The Floor Laughing"},
        {"TC", "Take Care"},
        {"U", "You"},
        {"VIP", "Very Important Person"},
        {"W8", "Wait"},
    };
    return table;
}

enum class normalization_step { strip_markup, expand_slang, lemmatize };

inline std::string_view to_string(normalization_step s) {
    switch (s) {
    case normalization_step::strip_markup: return "strip_markup";
    case normalization_step::expand_slang: return "expand_slang";
    case normalization_step::lemmatize: return "lemmatize";
    }
    return "?";
}

struct suffix_rule {
    std::string suffix;
    std::string replacement;
    bool repair = false; // try undoubling and a restored final 'e'
    std::string not_after; // rule is skipped when the stem ends with this
};

inline std::vector<suffix_rule> default_suffix_rules() {
    return {
        {"ies", "y", false, ""},
        {"sses", "ss", false, ""},
        {"s", "", false, "s"},
        {"ing", "", true, ""},
        {"ed", "", true, ""},
    };
}

struct normalization_config {
    std::map<std::string, std::string> acronyms; // case-folded key -> expansion
    std::set<std::string> known_words;            // lowercase
    std::map<std::string, std::string> lemma_exceptions;
    std::vector<suffix_rule> lemma_rules = default_suffix_rules();
    std::vector<normalization_step> steps{normalization_step::strip_markup, normalization_step::expand_slang,
                                          normalization_step::lemmatize};

    void add_acronym(std::string_view abbr, std::string expansion) {
        auto key = text::fold_case(abbr);
        if (!acronyms.emplace(key, std::move(expansion)).second)
            throw validation_error("duplicate acronym '" + std::string(abbr) + "'");
    }

    static normalization_config with_default_acronyms() {
        normalization_config c;
        for (const auto& [abbr, full] : default_acronyms()) c.add_acronym(abbr, full);
        return c;
    }
};

// "ABBR<TAB>expansion" per line.
inline void load_acronyms(normalization_config& config, const std::filesystem::path& path) {
    std::size_t n = 0;
    for (const auto& line : io::read_lines(path)) {
        ++n;
        if (text::trim(line).empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
            throw parse_error(path.string(), n, "expected ABBR<TAB>expansion");
        try {
            config.add_acronym(line.substr(0, tab), line.substr(tab + 1));
        } catch (const validation_error& e) {
            throw parse_error(path.string(), n, e.what());
        }
    }
}

inline void load_known_words(normalization_config& config, const std::filesystem::path& path) {
    for (const auto& line : io::read_lines(path)) {
        auto w = text::trim(line);
        if (!w.empty() && w[0] != '#') config.known_words.insert(text::fold_case(w));
    }
}

// "form<TAB>lemma" per line.
inline void load_lemma_exceptions(normalization_config& config, const std::filesystem::path& path) {
    std::size_t n = 0;
    for (const auto& line : io::read_lines(path)) {
        ++n;
        if (text::trim(line).empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw parse_error(path.string(), n, "expected form<TAB>lemma");
        config.lemma_exceptions[text::fold_case(line.substr(0, tab))] = text::fold_case(text::trim(line.substr(tab + 1)));
    }
}

// acronyms.tsv, known_words.txt and lemma_exceptions.tsv from one directory.
inline normalization_config load_normalization_config(const std::filesystem::path& dir) {
    normalization_config c;
    load_acronyms(c, dir / "acronyms.tsv");
    load_known_words(c, dir / "known_words.txt");
    load_lemma_exceptions(c, dir / "lemma_exceptions.tsv");
    return c;
}

namespace detail {

// The URL pattern is applied verbatim: \b(?:https?://|www\.)\S+\b
inline const std::regex& url_pattern() {
    static const std::regex re(R"(\b(?:https?://|www\.)\S+\b)", std::regex::ECMAScript | std::regex::optimize);
    return re;
}

inline const std::regex& mention_pattern() {
    static const std::regex re(R"(@\w+)", std::regex::ECMAScript | std::regex::optimize);
    return re;
}

// Applies fn to each whitespace-delimited token, keeping separators as-is.
template <typename Fn>
std::string map_tokens(std::string_view s, Fn&& fn) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (text::is_space(s[i])) {
            out.push_back(s[i++]);
            continue;
        }
        const std::size_t start = i;
        while (i < s.size() && !text::is_space(s[i])) ++i;
        out += fn(s.substr(start, i - start));
    }
    return out;
}

inline bool all_letters(std::string_view s) {
    if (!text::all_word_chars(s)) return false;
    return std::none_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Re-applies the original token's capitalization pattern to a lowercase lemma.
inline std::string recase(std::string_view original, std::string lemma) {
    const bool first_upper = !original.empty() && original[0] >= 'A' && original[0] <= 'Z';
    const bool all_upper = original.size() > 1 && std::all_of(original.begin(), original.end(), [](char c) {
                               return (c >= 'A' && c <= 'Z') || (c & 0x80);
                           });
    if (all_upper) {
        for (auto& c : lemma)
            if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 32);
    } else if (first_upper && !lemma.empty() && lemma[0] >= 'a' && lemma[0] <= 'z') {
        lemma[0] = static_cast<char>(lemma[0] - 32);
    }
    return lemma;
}

inline std::string lemma_of(const std::string& word, const normalization_config& config) {
    if (auto it = config.lemma_exceptions.find(word); it != config.lemma_exceptions.end()) return it->second;
    auto known = [&](const std::string& w) { return w.size() >= 2 && config.known_words.count(w) > 0; };
    for (const auto& rule : config.lemma_rules) {
        if (word.size() <= rule.suffix.size() || word.compare(word.size() - rule.suffix.size(), rule.suffix.size(), rule.suffix) != 0)
            continue;
        const std::string stem = word.substr(0, word.size() - rule.suffix.size());
        if (!rule.not_after.empty() && stem.size() >= rule.not_after.size() &&
            stem.compare(stem.size() - rule.not_after.size(), rule.not_after.size(), rule.not_after) == 0)
            continue;
        std::vector<std::string> candidates;
        if (rule.repair) {
            const bool doubled = stem.size() >= 3 && stem.back() == stem[stem.size() - 2] &&
                                 std::string_view("aeiouylsz").find(stem.back()) == std::string_view::npos;
            if (doubled) candidates.push_back(stem.substr(0, stem.size() - 1));
            candidates.push_back(stem + "e");
            candidates.push_back(stem);
        } else {
            candidates.push_back(stem + rule.replacement);
        }
        for (const auto& c : candidates)
            if (known(c)) return c;
    }
    return word;
}

} // namespace detail

inline std::string strip_markup(std::string_view input) {
    std::string cur(input);
    for (int pass = 0; pass < 8; ++pass) {
        std::string next = std::regex_replace(cur, detail::url_pattern(), "");
        next = std::regex_replace(next, detail::mention_pattern(), "");
        next = text::collapse_whitespace(text::remove_char(next, '#'));
        if (next == cur) break;
        cur = std::move(next);
    }
    return cur;
}

inline std::string expand_slang(std::string_view input, const normalization_config& config) {
    return detail::map_tokens(input, [&](std::string_view tok) -> std::string {
        if (!text::all_word_chars(tok)) return std::string(tok);
        const auto key = text::fold_case(tok);
        if (config.known_words.count(key)) return std::string(tok);
        if (auto it = config.acronyms.find(key); it != config.acronyms.end()) return it->second;
        return std::string(tok);
    });
}

inline std::string lemmatize(std::string_view input, const normalization_config& config) {
    return detail::map_tokens(input, [&](std::string_view tok) -> std::string {
        if (!detail::all_letters(tok)) return std::string(tok);
        std::string word = text::fold_case(tok);
        if (!config.known_words.count(word)) return std::string(tok);
        // Iterate to a fixed point so lemmatize(lemmatize(x)) == lemmatize(x).
        for (int i = 0; i < 4; ++i) {
            auto next = detail::lemma_of(word, config);
            if (next == word) break;
            word = std::move(next);
        }
        if (word == text::fold_case(tok)) return std::string(tok);
        return detail::recase(tok, std::move(word));
    });
}

struct step_record {
    normalization_step step;
    std::string before;
    std::string after;
};

struct normalized_tweet {
    std::string tweet_id;
    std::string original;
    std::string normalized;
    std::vector<step_record> steps;
};

inline void to_json(nlohmann::json& j, const normalized_tweet& n) {
    auto steps = nlohmann::json::array();
    for (const auto& s : n.steps) steps.push_back({{"step", to_string(s.step)}, {"before", s.before}, {"after", s.after}});
    j = nlohmann::json{{"tweet_id", n.tweet_id}, {"original", n.original}, {"normalized", n.normalized}, {"steps", steps}};
}

inline normalized_tweet normalized_from_json(const nlohmann::json& j) {
    normalized_tweet n;
    n.tweet_id = j.at("tweet_id").get<std::string>();
    n.original = j.at("original").get<std::string>();
    n.normalized = j.at("normalized").get<std::string>();
    return n;
}

// Enabled steps always run in the order strip_markup, expand_slang, lemmatize.
inline normalized_tweet normalize(std::string_view tweet_id, std::string_view text, const normalization_config& config) {
    normalized_tweet out{std::string(tweet_id), std::string(text), std::string(text), {}};
    for (auto step : {normalization_step::strip_markup, normalization_step::expand_slang, normalization_step::lemmatize}) {
        if (std::find(config.steps.begin(), config.steps.end(), step) == config.steps.end()) continue;
        std::string after;
        switch (step) {
        case normalization_step::strip_markup: after = strip_markup(out.normalized); break;
        case normalization_step::expand_slang: after = expand_slang(out.normalized, config); break;
        case normalization_step::lemmatize: after = lemmatize(out.normalized, config); break;
        }
        out.steps.push_back({step, out.normalized, after});
        out.normalized = std::move(after);
    }
    return out;
}

inline normalized_tweet normalize(const tweet& t, const normalization_config& config) {
    return normalize(t.id, t.text, config);
}

} // namespace evsent
