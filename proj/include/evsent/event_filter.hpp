#pragma once

// Event selection: seed keywords inside a time window, frequency-based
// candidate keywords, and a re-match with the approved expansion.

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evsent/corpus.hpp"
#include "evsent/error.hpp"
#include "evsent/io.hpp"
#include "evsent/text.hpp"
#include "evsent/time.hpp"

namespace evsent {

enum class expansion_source { matched_tweets, window_only };

struct expansion_config {
    expansion_source source = expansion_source::matched_tweets;
    std::optional<time_window> sub_window;
    int top_k = 25;
    int min_count = 3;
    std::string stopword_file;
};

struct event_spec {
    std::string name;
    std::set<std::string> seed_keywords;
    time_window window;
    expansion_config expansion;

    void validate() const {
        if (name.empty()) throw validation_error("event without a name");
        if (seed_keywords.empty()) throw validation_error("event " + name + ": seed_keywords must be non-empty");
        if (window.start > window.end) throw validation_error("event " + name + ": window start after end");
        if (expansion.sub_window && !window.contains(*expansion.sub_window))
            throw validation_error("event " + name + ": sub_window must lie inside window");
        if (expansion.top_k < 1) throw validation_error("event " + name + ": top_k must be >= 1");
        if (expansion.min_count < 1) throw validation_error("event " + name + ": min_count must be >= 1");
    }
};

struct keyword_candidate {
    std::string token;
    std::size_t count = 0; // distinct tweets containing the token

    friend bool operator==(const keyword_candidate&, const keyword_candidate&) = default;
};

// Keywords are stored case-folded with '#' removed, the same form the matcher
// compares against.
inline std::string canonical_keyword(std::string_view k) { return text::remove_char(text::fold_case(k), '#'); }

struct keyword_set {
    std::set<std::string> seeds;
    std::set<std::string> approved;
    std::vector<keyword_candidate> pending_candidates;

    static keyword_set from_seeds(const std::set<std::string>& raw) {
        keyword_set k;
        for (const auto& s : raw) k.seeds.insert(canonical_keyword(s));
        return k;
    }

    void approve(const std::string& token) {
        auto t = canonical_keyword(token);
        if (!seeds.count(t)) approved.insert(std::move(t));
    }

    std::set<std::string> all() const {
        std::set<std::string> out = seeds;
        out.insert(approved.begin(), approved.end());
        return out;
    }
};

struct event_match {
    std::string event;
    std::vector<std::string> tweet_ids; // chronological
    std::set<std::string> participants;
    std::map<std::string, std::size_t> per_user_counts;

    std::size_t size() const { return tweet_ids.size(); }
};

inline void to_json(nlohmann::json& j, const event_match& m) {
    j = nlohmann::json{{"event", m.event},
                       {"tweet_ids", m.tweet_ids},
                       {"participants", m.participants},
                       {"per_user_counts", m.per_user_counts}};
}

inline event_match event_match_from_json(const nlohmann::json& j) {
    event_match m;
    m.event = j.at("event").get<std::string>();
    m.tweet_ids = j.at("tweet_ids").get<std::vector<std::string>>();
    m.participants = j.at("participants").get<std::set<std::string>>();
    m.per_user_counts = j.at("per_user_counts").get<std::map<std::string, std::size_t>>();
    return m;
}

inline std::string matchable_text(std::string_view text) { return text::remove_char(text::fold_case(text), '#'); }

inline bool tweet_matches(const tweet& t, const std::set<std::string>& keywords) {
    const auto hay = matchable_text(t.text);
    for (const auto& k : keywords)
        if (!k.empty() && hay.find(k) != std::string::npos) return true;
    return false;
}

inline event_match match_tweets(const corpus_store& corpus, const event_spec& event, const keyword_set& keywords) {
    const auto keys = keywords.all();
    if (keys.empty()) throw usage_error("event " + event.name + ": no keywords to match");
    event_match m;
    m.event = event.name;
    for (const auto& t : corpus.tweets_in_window(event.window)) {
        if (!tweet_matches(t, keys)) continue;
        m.tweet_ids.push_back(t.id);
        m.participants.insert(t.user_id);
        ++m.per_user_counts[t.user_id];
    }
    return m;
}

using stopword_set = std::set<std::string>;

inline stopword_set load_stopwords(const std::filesystem::path& path) {
    stopword_set out;
    for (const auto& line : io::read_lines(path)) {
        auto w = text::trim(line);
        if (w.empty() || w[0] == '#') continue;
        out.insert(text::fold_case(w));
    }
    return out;
}

// Distinct-tweet counts of case-folded word tokens over the candidate pool,
// highest first, ties in lexicographic order.
inline std::vector<keyword_candidate> propose_keywords(const corpus_store& corpus, const event_spec& event,
                                                       const keyword_set& current, const stopword_set& stopwords) {
    std::vector<tweet> pool;
    if (event.expansion.source == expansion_source::matched_tweets) {
        const auto m = match_tweets(corpus, event, current);
        for (const auto& id : m.tweet_ids) pool.push_back(*corpus.find_tweet(id));
    } else {
        pool = corpus.tweets_in_window(event.expansion.sub_window.value_or(event.window));
    }

    const auto existing = current.all();
    std::map<std::string, std::size_t> df;
    for (const auto& t : pool) {
        const auto tokens = text::word_runs(text::fold_case(t.text));
        for (const auto& tok : std::set<std::string>(tokens.begin(), tokens.end())) ++df[tok];
    }
    std::vector<keyword_candidate> out;
    for (const auto& [tok, count] : df) {
        if (count < static_cast<std::size_t>(event.expansion.min_count)) continue;
        if (text::code_point_count(tok) < 3 || text::all_digits(tok)) continue;
        if (stopwords.count(tok) || existing.count(tok)) continue;
        out.push_back({tok, count});
    }
    std::sort(out.begin(), out.end(), [](const keyword_candidate& a, const keyword_candidate& b) {
        return a.count != b.count ? a.count > b.count : a.token < b.token;
    });
    if (out.size() > static_cast<std::size_t>(event.expansion.top_k)) out.resize(static_cast<std::size_t>(event.expansion.top_k));
    return out;
}

struct rematch_result {
    keyword_set keywords;
    event_match seed_only;
    event_match expanded;
};

// Seeds plus approved tokens, re-matched over the same window.
inline rematch_result expand_and_rematch(const corpus_store& corpus, const event_spec& event,
                                         const std::set<std::string>& approved) {
    rematch_result r;
    r.keywords = keyword_set::from_seeds(event.seed_keywords);
    r.seed_only = match_tweets(corpus, event, r.keywords);
    for (const auto& a : approved) r.keywords.approve(a);
    r.expanded = match_tweets(corpus, event, r.keywords);
    return r;
}

// events.json: [{"name","seed_keywords":[...],"window":{"start","end"},
//               "expansion":{"source","sub_window","top_k","min_count","stopword_file"}}]
inline event_spec event_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    event_spec e;
    e.name = j.at("name").get<std::string>();
    for (const auto& k : j.at("seed_keywords")) e.seed_keywords.insert(k.get<std::string>());
    const auto& w = j.at("window");
    e.window = {parse_iso8601(w.at("start").get<std::string>()), parse_iso8601(w.at("end").get<std::string>())};
    if (j.contains("expansion")) {
        const auto& x = j["expansion"];
        const auto src = x.value("source", std::string("matched-tweets"));
        if (src == "matched-tweets") e.expansion.source = expansion_source::matched_tweets;
        else if (src == "window-only") e.expansion.source = expansion_source::window_only;
        else throw validation_error("event " + e.name + ": unknown expansion source '" + src + "'");
        if (x.contains("sub_window") && !x["sub_window"].is_null())
            e.expansion.sub_window = time_window{parse_iso8601(x["sub_window"].at("start").get<std::string>()),
                                                 parse_iso8601(x["sub_window"].at("end").get<std::string>())};
        e.expansion.top_k = x.value("top_k", 25);
        e.expansion.min_count = x.value("min_count", 3);
        if (x.contains("stopword_file") && !x["stopword_file"].is_null()) {
            std::filesystem::path p = x["stopword_file"].get<std::string>();
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            e.expansion.stopword_file = p.string();
        }
    }
    e.validate();
    return e;
}

inline std::vector<event_spec> load_events(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path.string(), 0, e.what());
    }
    if (!j.is_array()) throw parse_error(path.string(), 0, "expected a JSON array of events");
    std::vector<event_spec> out;
    for (const auto& e : j) {
        try {
            out.push_back(event_from_json(e, path.parent_path()));
        } catch (const nlohmann::json::exception& ex) {
            throw parse_error(path.string(), 0, ex.what());
        }
    }
    return out;
}

} // namespace evsent
