#pragma once

// Review items: everything a human can decide on, gathered from the artifacts
// in an output directory. Shared by `review export|import` and the HTTP
// review service.

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evsent/corpus.hpp"
#include "evsent/decisions.hpp"
#include "evsent/error.hpp"
#include "evsent/io.hpp"
#include "evsent/metrics.hpp"
#include "evsent/pipeline.hpp"

namespace evsent {

enum class review_kind { labels, profiles, keywords, samples };

inline constexpr std::array all_review_kinds{review_kind::labels, review_kind::profiles, review_kind::keywords,
                                             review_kind::samples};

inline std::string_view to_string(review_kind k) {
    switch (k) {
    case review_kind::labels: return "labels";
    case review_kind::profiles: return "profiles";
    case review_kind::keywords: return "keywords";
    case review_kind::samples: return "samples";
    }
    return "?";
}

// Accepts the plural review names and the singular decision kinds.
inline std::optional<review_kind> parse_review_kind(std::string_view s) {
    if (s == "labels" || s == "label") return review_kind::labels;
    if (s == "profiles" || s == "profile") return review_kind::profiles;
    if (s == "keywords" || s == "keyword") return review_kind::keywords;
    if (s == "samples" || s == "sample") return review_kind::samples;
    return std::nullopt;
}

inline decision_kind decision_kind_of(review_kind k) {
    switch (k) {
    case review_kind::labels: return decision_kind::label;
    case review_kind::profiles: return decision_kind::profile;
    case review_kind::keywords: return decision_kind::keyword;
    case review_kind::samples: return decision_kind::sample;
    }
    return decision_kind::label;
}

inline review_kind review_kind_of(decision_kind k) {
    switch (k) {
    case decision_kind::label: return review_kind::labels;
    case decision_kind::profile: return review_kind::profiles;
    case decision_kind::keyword: return review_kind::keywords;
    case decision_kind::sample: return review_kind::samples;
    }
    return review_kind::labels;
}

struct review_item {
    review_kind kind = review_kind::labels;
    std::string key;
    nlohmann::json payload = nlohmann::json::object();
    std::vector<std::string> allowed;
};

// Stable across restarts: derived from (kind, key) only.
inline std::string envelope_id(review_kind kind, const std::string& key) {
    const auto dk = std::string(to_string(decision_kind_of(kind)));
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(detail::fnv1a64(dk + "\n" + key)));
    return dk + "-" + hex;
}

namespace detail {

inline std::vector<std::string> accept_reject() { return {"accept", "reject"}; }

inline std::vector<std::string> labels_for(sample_kind k) {
    if (k == sample_kind::relevance) return {"relevant", "irrelevant"};
    return {"Positive", "Neutral", "Negative"};
}

inline std::optional<nlohmann::json> read_json_if(const fs::path& p) {
    if (!fs::exists(p)) return std::nullopt;
    return read_json(p);
}

inline std::vector<sample_task> load_samples(const fs::path& out_dir) {
    const auto p = out_dir / artifact::samples;
    if (!fs::exists(p)) return {};
    return samples_from_lines(io::read_lines(p), p.string());
}

inline corpus_store load_store_if(const fs::path& dir) {
    corpus_store s;
    if (fs::exists(dir / "users.jsonl")) s.ingest_directory(dir);
    return s;
}

} // namespace detail

// Every decidable item of one kind, pending or not. Items already decided in
// the log are included even when the artifact that raised them is gone, so a
// repeated decision still resolves to its envelope.
inline std::vector<review_item> collect_review_items(const fs::path& out_dir, review_kind kind, const decision_log& log) {
    std::map<std::string, review_item> items;
    auto put = [&](review_item it) {
        const auto key = it.key;
        items.emplace(key, std::move(it));
    };
    switch (kind) {
    case review_kind::labels:
        if (auto j = detail::read_json_if(out_dir / artifact::labels_pending))
            for (const auto& e : j->at("items"))
                put({kind, e.at("label").get<std::string>(),
                     {{"label", e.at("label")}, {"lists", e.value("lists", nlohmann::json::array())}, {"round", j->value("round", 0)}},
                     detail::accept_reject()});
        break;
    case review_kind::profiles:
        if (auto j = detail::read_json_if(out_dir / artifact::community)) {
            const auto store = detail::load_store_if(out_dir / artifact::store);
            for (const auto& r : j->at("rejected")) {
                const auto id = r.at("id").get<std::string>();
                nlohmann::json payload{{"user_id", id}, {"reason", r.at("reason")}};
                if (const auto* u = store.find_user(id)) payload["profile"] = *u;
                put({kind, id, payload, detail::accept_reject()});
            }
        }
        break;
    case review_kind::keywords:
        if (auto j = detail::read_json_if(out_dir / artifact::keywords_pending))
            for (const auto& e : j->at("items")) {
                const auto ev = e.at("event").get<std::string>();
                const auto tok = e.at("token").get<std::string>();
                put({kind, keyword_key(ev, tok),
                     {{"event", ev}, {"token", tok}, {"count", e.at("count")}, {"examples", e.at("examples")}},
                     detail::accept_reject()});
            }
        break;
    case review_kind::samples: {
        const auto tasks = detail::load_samples(out_dir);
        if (tasks.empty()) break;
        const auto store = detail::load_store_if(out_dir / artifact::timeline);
        for (const auto& t : tasks)
            for (const auto& it : t.items) {
                nlohmann::json payload{{"task_id", t.task_id}, {"task_kind", to_string(t.kind)}, {"tweet_id", it.tweet_id}};
                if (const auto* tw = store.find_tweet(it.tweet_id)) payload["text"] = tw->text;
                put({kind, sample_key(t.task_id, it.tweet_id), payload, detail::labels_for(t.kind)});
            }
        break;
    }
    }
    const auto dk = decision_kind_of(kind);
    for (const auto& [key, v] : log.verdicts(dk)) {
        if (items.count(key)) continue;
        review_item it{kind, key, {{"key", key}}, detail::accept_reject()};
        if (kind == review_kind::samples)
            it.allowed = v == "relevant" || v == "irrelevant" ? detail::labels_for(sample_kind::relevance)
                             : detail::labels_for(sample_kind::sentiment);
        put(std::move(it));
    }
    std::vector<review_item> out;
    for (auto& [k, it] : items) out.push_back(std::move(it));
    return out;
}

// Number of records written for (kind, key); 0 while pending.
inline std::size_t decision_version(const decision_log& log, review_kind kind, const std::string& key) {
    std::size_t n = 0;
    const auto dk = decision_kind_of(kind);
    for (const auto& r : log.records())
        if (r.kind == dk && r.key == key) ++n;
    return n;
}

inline nlohmann::json review_envelope(const review_item& it, const decision_log& log) {
    const auto v = log.find(decision_kind_of(it.kind), it.key);
    return {{"id", envelope_id(it.kind, it.key)},
            {"kind", to_string(it.kind)},
            {"decision_kind", to_string(decision_kind_of(it.kind))},
            {"key", it.key},
            {"payload", it.payload},
            {"allowed", it.allowed},
            {"verdict", v ? *v : std::string("pending")},
            {"version", decision_version(log, it.kind, it.key)}};
}

inline std::vector<review_item> pending_review_items(const fs::path& out_dir, review_kind kind, const decision_log& log) {
    std::vector<review_item> out;
    for (auto& it : collect_review_items(out_dir, kind, log))
        if (!log.find(decision_kind_of(kind), it.key)) out.push_back(std::move(it));
    return out;
}

// One JSONL line per pending item; returns the count. An empty file is
// written when nothing is pending.
inline std::size_t export_review(const fs::path& out_dir, review_kind kind, const decision_log& log,
                                 const fs::path& file) {
    const auto items = pending_review_items(out_dir, kind, log);
    std::string body;
    for (const auto& it : items)
        body += nlohmann::json{{"kind", to_string(decision_kind_of(kind))},
                               {"key", it.key},
                               {"verdict", "pending"},
                               {"context", it.payload}}
                    .dump() +
                "\n";
    io::write_file_atomic(file, body);
    return items.size();
}

struct import_summary {
    std::size_t merged = 0;
    std::size_t still_pending = 0;
    std::size_t unchanged = 0;
};

// All-or-nothing: any invalid line aborts the import before anything is
// appended to the log.
inline import_summary import_review(const fs::path& file, const fs::path& out_dir, decision_log& log,
                                    std::optional<review_kind> only = std::nullopt) {
    static const std::set<std::string> known_fields{"id", "kind", "key", "verdict", "source", "context"};
    std::map<std::string, sample_kind> task_kinds;
    for (const auto& t : detail::load_samples(out_dir)) task_kinds[t.task_id] = t.kind;

    import_summary s;
    std::vector<decision_record> accepted;
    std::string problems;
    std::size_t line_no = 0;
    for (const auto& line : io::read_lines(file)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        auto fail = [&](const std::string& why) { problems += "\n  line " + std::to_string(line_no) + ": " + why; };
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(std::string("not JSON: ") + e.what());
            continue;
        }
        if (!j.is_object()) {
            fail("expected a JSON object");
            continue;
        }
        std::string unknown;
        for (const auto& [k, v] : j.items())
            if (!known_fields.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
        if (!unknown.empty()) {
            fail("unknown field(s): " + unknown);
            continue;
        }
        if (j.value("verdict", nlohmann::json()).is_string() && j["verdict"] == "pending") {
            ++s.still_pending;
            continue;
        }
        decision_record d;
        try {
            d = parse_decision(j);
        } catch (const validation_error& e) {
            fail(e.what());
            continue;
        }
        if (only && decision_kind_of(*only) != d.kind) {
            fail("kind " + std::string(to_string(d.kind)) + " does not match --kind " + std::string(to_string(*only)));
            continue;
        }
        if (d.kind == decision_kind::sample) {
            const auto task = d.key.substr(0, d.key.find('|'));
            auto it = task_kinds.find(task);
            if (d.key.find('|') == std::string::npos || it == task_kinds.end()) {
                fail("unknown sample task in key \"" + d.key + "\"");
                continue;
            }
            if (!label_allowed(it->second, d.verdict)) {
                fail("label \"" + d.verdict + "\" not allowed for " + std::string(to_string(it->second)) + " task " + task);
                continue;
            }
        }
        accepted.push_back(std::move(d));
    }
    if (!problems.empty()) throw validation_error(file.string() + ": nothing imported:" + problems);
    for (const auto& d : accepted) {
        if (auto cur = log.find(d.kind, d.key); cur && *cur == d.verdict) {
            ++s.unchanged;
            continue;
        }
        log.append(d);
        ++s.merged;
    }
    return s;
}

} // namespace evsent
