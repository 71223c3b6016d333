#pragma once

// Two deterministic analyzers behind one verdict type:
//  - fine: 5-class lexicon/rule scorer with negation and intensifiers;
//  - emoticon: emoticon-first Ekman emotion classifier. When any emoticon is
//    present the emoticons alone decide the polarity and words are ignored.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evsent/error.hpp"
#include "evsent/io.hpp"
#include "evsent/text.hpp"

namespace evsent {

enum class sentiment_class : int { very_negative = 0, negative = 1, neutral = 2, positive = 3, very_positive = 4 };

inline constexpr std::array<sentiment_class, 5> all_sentiment_classes{
    sentiment_class::very_negative, sentiment_class::negative, sentiment_class::neutral, sentiment_class::positive,
    sentiment_class::very_positive};

inline std::string_view to_string(sentiment_class c) {
    switch (c) {
    case sentiment_class::very_negative: return "VeryNegative";
    case sentiment_class::negative: return "Negative";
    case sentiment_class::neutral: return "Neutral";
    case sentiment_class::positive: return "Positive";
    case sentiment_class::very_positive: return "VeryPositive";
    }
    return "?";
}

inline std::optional<sentiment_class> parse_sentiment_class(std::string_view s) {
    for (auto c : all_sentiment_classes)
        if (to_string(c) == s) return c;
    return std::nullopt;
}

// The three-way view used by human labels and by the emoticon engine.
enum class polarity3 : int { negative = 0, neutral = 1, positive = 2 };

inline constexpr std::array<polarity3, 3> all_polarities{polarity3::negative, polarity3::neutral, polarity3::positive};

inline std::string_view to_string(polarity3 p) {
    switch (p) {
    case polarity3::negative: return "Negative";
    case polarity3::neutral: return "Neutral";
    case polarity3::positive: return "Positive";
    }
    return "?";
}

inline std::optional<polarity3> parse_polarity3(std::string_view s) {
    if (s == "Negative" || s == "VeryNegative") return polarity3::negative;
    if (s == "Neutral") return polarity3::neutral;
    if (s == "Positive" || s == "VeryPositive") return polarity3::positive;
    return std::nullopt;
}

inline polarity3 collapse(sentiment_class c) {
    if (c == sentiment_class::very_negative || c == sentiment_class::negative) return polarity3::negative;
    if (c == sentiment_class::neutral) return polarity3::neutral;
    return polarity3::positive;
}

inline polarity3 polarity_of_sign(int p) {
    return p < 0 ? polarity3::negative : (p > 0 ? polarity3::positive : polarity3::neutral);
}

enum class emotion : int { anger, disgust, fear, happiness, sadness, surprise }; // lexicographic by name

inline constexpr std::array<emotion, 6> all_emotions{emotion::anger, emotion::disgust, emotion::fear,
                                                     emotion::happiness, emotion::sadness, emotion::surprise};

inline std::string_view to_string(emotion e) {
    switch (e) {
    case emotion::anger: return "anger";
    case emotion::disgust: return "disgust";
    case emotion::fear: return "fear";
    case emotion::happiness: return "happiness";
    case emotion::sadness: return "sadness";
    case emotion::surprise: return "surprise";
    }
    return "?";
}

inline std::optional<emotion> parse_emotion(std::string_view s) {
    for (auto e : all_emotions)
        if (to_string(e) == s) return e;
    return std::nullopt;
}

struct emotion_profile {
    std::array<double, 6> weights{}; // indexed by emotion
    int polarity = 0;                 // -1, 0, +1
    std::optional<emotion> dominant;

    double weight(emotion e) const { return weights[static_cast<std::size_t>(e)]; }

    friend bool operator==(const emotion_profile&, const emotion_profile&) = default;
};

struct emoticon_entry {
    int polarity = 0;
    std::optional<emotion> feeling;
};

struct lexicon_bundle {
    std::map<std::string, double> valence;      // score in [-2, 2]
    std::set<std::string> negators;
    std::map<std::string, double> intensifiers; // multiplier > 0
    std::map<std::string, std::pair<emotion, double>> emotions;
    std::map<std::string, emoticon_entry> emoticons;

    void validate() const {
        for (const auto& [w, s] : valence)
            if (s < -2.0 || s > 2.0) throw validation_error("valence of '" + w + "' outside [-2, 2]");
        for (const auto& [w, m] : intensifiers)
            if (!(m > 0.0)) throw validation_error("intensifier '" + w + "' must have a positive multiplier");
        for (const auto& [w, e] : emotions)
            if (e.second < 0.0) throw validation_error("emotion weight of '" + w + "' must be >= 0");
        for (const auto& [w, e] : emoticons)
            if (e.polarity < -1 || e.polarity > 1) throw validation_error("emoticon '" + w + "' polarity must be -1, 0 or 1");
    }
};

namespace detail {

inline std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& path, std::size_t columns) {
    std::vector<std::vector<std::string>> rows;
    std::size_t n = 0;
    for (const auto& line : io::read_lines(path)) {
        ++n;
        if (text::trim(line).empty()) continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        for (;;) {
            const auto tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cols.size() != columns)
            throw parse_error(path.string(), n, "expected " + std::to_string(columns) + " tab-separated columns");
        rows.push_back(std::move(cols));
    }
    return rows;
}

inline double parse_number(const std::string& s, const std::filesystem::path& path) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw parse_error(path.string(), 0, "not a number: '" + s + "'");
    }
}

template <typename Map, typename V>
void insert_unique(Map& m, const std::string& key, V&& v, const std::filesystem::path& path) {
    if (!m.emplace(text::fold_case(key), std::forward<V>(v)).second)
        throw parse_error(path.string(), 0, "duplicate key '" + key + "'");
}

} // namespace detail

struct lexicon_paths {
    std::filesystem::path valence, negators, intensifiers, emotions, emoticons;

    // The shipped file names inside one directory.
    static lexicon_paths in(const std::filesystem::path& dir) {
        return {dir / "valence.tsv", dir / "negators.txt", dir / "intensifiers.tsv", dir / "emotions.tsv",
                dir / "emoticons.tsv"};
    }
};

// valence.tsv "word<TAB>score"; negators.txt; intensifiers.tsv
// "word<TAB>multiplier"; emotions.tsv "word<TAB>emotion<TAB>weight";
// emoticons.tsv "literal<TAB>polarity<TAB>emotion" (emotion may be "-").
inline lexicon_bundle load_lexicons(const lexicon_paths& p) {
    lexicon_bundle b;
    for (const auto& r : detail::read_tsv(p.valence, 2))
        detail::insert_unique(b.valence, r[0], detail::parse_number(r[1], p.valence), p.valence);
    for (const auto& line : io::read_lines(p.negators)) {
        auto w = text::trim(line);
        if (!w.empty()) b.negators.insert(text::fold_case(w));
    }
    for (const auto& r : detail::read_tsv(p.intensifiers, 2))
        detail::insert_unique(b.intensifiers, r[0], detail::parse_number(r[1], p.intensifiers), p.intensifiers);
    for (const auto& r : detail::read_tsv(p.emotions, 3)) {
        auto e = parse_emotion(r[1]);
        if (!e) throw parse_error(p.emotions.string(), 0, "unknown emotion '" + r[1] + "'");
        detail::insert_unique(b.emotions, r[0], std::make_pair(*e, detail::parse_number(r[2], p.emotions)), p.emotions);
    }
    for (const auto& r : detail::read_tsv(p.emoticons, 3)) {
        emoticon_entry e;
        e.polarity = static_cast<int>(detail::parse_number(r[1], p.emoticons));
        if (r[2] != "-") {
            e.feeling = parse_emotion(r[2]);
            if (!e.feeling) throw parse_error(p.emoticons.string(), 0, "unknown emotion '" + r[2] + "'");
        }
        detail::insert_unique(b.emoticons, r[0], e, p.emoticons);
    }
    b.validate();
    return b;
}

struct emoticon_hit {
    std::string literal;      // lexicon key
    std::size_t prefix = 0;   // bytes of attached word before the emoticon
};

// Resolves a whitespace token to an emoticon-lexicon literal. Accepts the
// literal itself, the literal with its last character repeated (":)))"), and
// a word with a trailing emoticon that starts with punctuation ("Jalsa:)").
inline std::optional<emoticon_hit> find_emoticon(std::string_view token, const lexicon_bundle& lex) {
    if (lex.emoticons.empty() || token.empty()) return std::nullopt;
    const std::string folded = text::fold_case(token);
    auto exact = [&](std::string_view t) -> std::optional<std::string> {
        if (auto it = lex.emoticons.find(std::string(t)); it != lex.emoticons.end()) return it->first;
        std::size_t end = t.size();
        while (end > 1 && t[end - 2] == t.back()) {
            --end;
            if (auto it = lex.emoticons.find(std::string(t.substr(0, end))); it != lex.emoticons.end()) return it->first;
        }
        return std::nullopt;
    };
    if (auto e = exact(folded)) return emoticon_hit{*e, 0};
    for (std::size_t i = 1; i < folded.size(); ++i) {
        const unsigned char c = static_cast<unsigned char>(folded[i]);
        if (std::isalnum(c) || (c & 0x80)) continue;
        if (!text::all_word_chars(std::string_view(folded).substr(0, i))) break;
        if (auto e = exact(std::string_view(folded).substr(i))) return emoticon_hit{*e, i};
        break;
    }
    return std::nullopt;
}

inline std::optional<std::string> match_emoticon(std::string_view token, const lexicon_bundle& lex) {
    if (auto hit = find_emoticon(token, lex)) return hit->literal;
    return std::nullopt;
}

// Case-folded tokens; emoticons survive as single tokens, other text splits
// into runs of word characters and apostrophes.
inline std::vector<std::string> sentiment_tokens(std::string_view input, const lexicon_bundle& lex) {
    std::vector<std::string> out;
    for (const auto& ws : text::split_whitespace(input)) {
        const std::string tok = text::fold_case(ws);
        if (auto hit = find_emoticon(tok, lex)) {
            if (hit->prefix > 0) out.push_back(tok.substr(0, hit->prefix));
            out.push_back(hit->literal);
            continue;
        }
        if (lex.valence.count(tok) || lex.negators.count(tok)) {
            out.push_back(tok);
            continue;
        }
        std::string cur;
        for (std::size_t i = 0; i < tok.size();) {
            const std::size_t start = i;
            const char32_t cp = text::next_code_point(tok, i);
            if (text::is_word_code_point(cp) || cp == '\'') {
                cur.append(tok, start, i - start);
            } else if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        }
        if (!cur.empty()) out.push_back(std::move(cur));
    }
    for (auto& t : out) {
        while (!t.empty() && t.front() == '\'') t.erase(t.begin());
        while (!t.empty() && t.back() == '\'') t.pop_back();
    }
    out.erase(std::remove(out.begin(), out.end(), std::string{}), out.end());
    return out;
}

struct fine_options {
    int negator_window = 3;
    int intensifier_window = 2;
    double very_negative_at = -3.0; // s <= this
    double negative_at = -1.0;      // s <= this
    double positive_at = 1.0;       // s >= this
    double very_positive_at = 3.0;  // s >= this
};

inline sentiment_class class_of_score(double s, const fine_options& o = {}) {
    if (s <= o.very_negative_at) return sentiment_class::very_negative;
    if (s <= o.negative_at) return sentiment_class::negative;
    if (s >= o.very_positive_at) return sentiment_class::very_positive;
    if (s >= o.positive_at) return sentiment_class::positive;
    return sentiment_class::neutral;
}

enum class analyzer_id { fine, emoticon };

inline std::string_view to_string(analyzer_id a) { return a == analyzer_id::fine ? "fine" : "emoticon"; }

inline analyzer_id parse_analyzer_id(std::string_view s) {
    if (s == "fine") return analyzer_id::fine;
    if (s == "emoticon") return analyzer_id::emoticon;
    throw usage_error("unknown analyzer '" + std::string(s) + "' (expected fine or emoticon)");
}

struct sentiment_verdict {
    std::string tweet_id;
    analyzer_id analyzer = analyzer_id::fine;
    sentiment_class fine_class = sentiment_class::neutral; // fine engine
    emotion_profile profile;                               // emoticon engine
    double score = 0.0;

    polarity3 collapsed() const {
        return analyzer == analyzer_id::fine ? collapse(fine_class) : polarity_of_sign(profile.polarity);
    }
};

inline double fine_score(const std::vector<std::string>& tokens, const lexicon_bundle& lex, const fine_options& o = {}) {
    double s = 0.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto v = lex.valence.find(tokens[i]);
        if (v == lex.valence.end()) continue;
        double mult = 1.0;
        for (int k = 1; k <= o.intensifier_window && static_cast<std::size_t>(k) <= i; ++k)
            if (auto it = lex.intensifiers.find(tokens[i - k]); it != lex.intensifiers.end()) mult *= it->second;
        bool negated = false;
        for (int k = 1; k <= o.negator_window && static_cast<std::size_t>(k) <= i; ++k)
            if (lex.negators.count(tokens[i - k])) negated = true;
        s += v->second * mult * (negated ? -1.0 : 1.0);
    }
    return s;
}

inline sentiment_verdict classify_fine(std::string_view tweet_id, std::string_view text, const lexicon_bundle& lex,
                                       const fine_options& o = {}) {
    sentiment_verdict v;
    v.tweet_id = std::string(tweet_id);
    v.analyzer = analyzer_id::fine;
    v.score = fine_score(sentiment_tokens(text, lex), lex, o);
    v.fine_class = class_of_score(v.score, o);
    return v;
}

// happiness +1; sadness, anger, fear, disgust -1; surprise 0.
inline std::array<int, 6> default_emotion_valence() { return {-1, -1, -1, +1, -1, 0}; }

inline std::optional<emotion> dominant_emotion(const std::array<double, 6>& w) {
    std::optional<emotion> best;
    for (auto e : all_emotions) {
        const double x = w[static_cast<std::size_t>(e)];
        if (x > 0.0 && (!best || x > w[static_cast<std::size_t>(*best)])) best = e;
    }
    return best;
}

inline sentiment_verdict classify_emoticon_first(std::string_view tweet_id, std::string_view text,
                                                 const lexicon_bundle& lex,
                                                 const std::array<int, 6>& valence = default_emotion_valence()) {
    sentiment_verdict v;
    v.tweet_id = std::string(tweet_id);
    v.analyzer = analyzer_id::emoticon;
    int net = 0;
    bool any_emoticon = false;
    for (const auto& ws : text::split_whitespace(text)) {
        auto lit = match_emoticon(ws, lex);
        if (!lit) continue;
        any_emoticon = true;
        const auto& e = lex.emoticons.at(*lit);
        net += e.polarity;
        if (e.feeling) v.profile.weights[static_cast<std::size_t>(*e.feeling)] += 1.0;
    }
    if (any_emoticon) {
        v.profile.polarity = net > 0 ? 1 : (net < 0 ? -1 : 0);
        v.profile.dominant = dominant_emotion(v.profile.weights);
        v.score = net;
        return v;
    }
    for (const auto& tok : sentiment_tokens(text, lex)) {
        if (auto it = lex.emotions.find(tok); it != lex.emotions.end())
            v.profile.weights[static_cast<std::size_t>(it->second.first)] += it->second.second;
    }
    v.profile.dominant = dominant_emotion(v.profile.weights);
    if (v.profile.dominant) {
        const auto d = static_cast<std::size_t>(*v.profile.dominant);
        v.profile.polarity = valence[d];
        v.score = valence[d] * v.profile.weights[d];
    }
    return v;
}

inline void to_json(nlohmann::json& j, const sentiment_verdict& v) {
    j = nlohmann::json{{"tweet_id", v.tweet_id}, {"analyzer", to_string(v.analyzer)}, {"score", v.score}};
    if (v.analyzer == analyzer_id::fine) {
        j["class"] = to_string(v.fine_class);
    } else {
        j["polarity"] = v.profile.polarity;
        nlohmann::json emotions = nlohmann::json::object();
        for (auto e : all_emotions)
            if (v.profile.weight(e) > 0.0) emotions[std::string(to_string(e))] = v.profile.weight(e);
        j["emotions"] = emotions;
        j["dominant"] = v.profile.dominant ? nlohmann::json(to_string(*v.profile.dominant)) : nlohmann::json(nullptr);
    }
}

inline sentiment_verdict verdict_from_json(const nlohmann::json& j) {
    sentiment_verdict v;
    v.tweet_id = j.at("tweet_id").get<std::string>();
    v.analyzer = parse_analyzer_id(j.at("analyzer").get<std::string>());
    v.score = j.at("score").get<double>();
    if (v.analyzer == analyzer_id::fine) {
        auto c = parse_sentiment_class(j.at("class").get<std::string>());
        if (!c) throw validation_error("bad class in verdict for " + v.tweet_id);
        v.fine_class = *c;
    } else {
        v.profile.polarity = j.at("polarity").get<int>();
        for (const auto& [name, w] : j.at("emotions").items()) {
            auto e = parse_emotion(name);
            if (!e) throw validation_error("bad emotion in verdict for " + v.tweet_id);
            v.profile.weights[static_cast<std::size_t>(*e)] = w.get<double>();
        }
        v.profile.dominant = dominant_emotion(v.profile.weights);
    }
    return v;
}

struct text_item {
    std::string id;
    std::string text;
};

struct event_classification {
    std::vector<sentiment_verdict> verdicts;
    std::map<std::string, std::size_t> summary; // class label -> count
};

// Fine summaries use the five class labels; emoticon summaries the three
// polarity labels.
inline event_classification classify_event(const std::vector<text_item>& tweets, std::string_view analyzer,
                                           const lexicon_bundle& lex) {
    const analyzer_id id = parse_analyzer_id(analyzer);
    event_classification out;
    for (const auto& t : tweets) {
        auto v = id == analyzer_id::fine ? classify_fine(t.id, t.text, lex) : classify_emoticon_first(t.id, t.text, lex);
        const std::string label(id == analyzer_id::fine ? to_string(v.fine_class) : to_string(v.collapsed()));
        ++out.summary[label];
        out.verdicts.push_back(std::move(v));
    }
    return out;
}

} // namespace evsent
