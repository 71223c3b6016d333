#pragma once

// Append-only log of human decisions (decisions.jsonl). The CLI review import
// and the review service both write here; every stage reads it.

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "evsent/error.hpp"
#include "evsent/io.hpp"
#include "evsent/text.hpp"

namespace evsent {

enum class decision_kind { label, profile, keyword, sample };

inline std::string_view to_string(decision_kind k) {
    switch (k) {
    case decision_kind::label: return "label";
    case decision_kind::profile: return "profile";
    case decision_kind::keyword: return "keyword";
    case decision_kind::sample: return "sample";
    }
    return "?";
}

inline std::optional<decision_kind> parse_decision_kind(std::string_view s) {
    if (s == "label") return decision_kind::label;
    if (s == "profile") return decision_kind::profile;
    if (s == "keyword") return decision_kind::keyword;
    if (s == "sample") return decision_kind::sample;
    return std::nullopt;
}

// Human labels allowed on sample tasks.
inline bool is_sample_label(std::string_view v) {
    return v == "relevant" || v == "irrelevant" || v == "Positive" || v == "Negative" || v == "Neutral";
}

inline bool is_valid_verdict(decision_kind kind, std::string_view v) {
    if (kind == decision_kind::sample) return is_sample_label(v);
    return v == "accept" || v == "reject";
}

struct decision_record {
    decision_kind kind = decision_kind::label;
    std::string key;
    std::string verdict;
    std::string source = "human";

    friend bool operator==(const decision_record&, const decision_record&) = default;
};

inline void to_json(nlohmann::json& j, const decision_record& d) {
    j = nlohmann::json{{"kind", to_string(d.kind)}, {"key", d.key}, {"verdict", d.verdict}, {"source", d.source}};
}

inline decision_record parse_decision(const nlohmann::json& j) {
    if (!j.is_object()) throw validation_error("decision must be a JSON object");
    for (const char* f : {"kind", "key", "verdict"})
        if (!j.contains(f) || !j[f].is_string()) throw validation_error(std::string("missing string field \"") + f + "\"");
    decision_record d;
    auto kind = parse_decision_kind(j["kind"].get<std::string>());
    if (!kind) throw validation_error("unknown kind \"" + j["kind"].get<std::string>() + "\"");
    d.kind = *kind;
    d.key = j["key"].get<std::string>();
    if (d.key.empty()) throw validation_error("empty key");
    d.verdict = j["verdict"].get<std::string>();
    if (!is_valid_verdict(d.kind, d.verdict))
        throw validation_error("invalid verdict \"" + d.verdict + "\" for kind " + std::string(to_string(d.kind)));
    if (j.contains("source")) {
        if (!j["source"].is_string()) throw validation_error("source must be a string");
        d.source = j["source"].get<std::string>();
    }
    return d;
}

// Key used for keyword candidates: one decision per (event, token).
inline std::string keyword_key(std::string_view event, std::string_view token) {
    return std::string(event) + "|" + std::string(token);
}

// Key used for sample items.
inline std::string sample_key(std::string_view task_id, std::string_view tweet_id) {
    return std::string(task_id) + "|" + std::string(tweet_id);
}

class decision_log {
public:
    decision_log() = default;
    explicit decision_log(std::filesystem::path path) : path_(std::move(path)) {
        if (std::filesystem::exists(path_)) {
            for (auto& d : parse_file(path_)) remember(std::move(d));
        }
    }

    decision_log(const decision_log& o) : path_(o.path_), records_(o.records_), index_(o.index_) {}
    decision_log& operator=(const decision_log& o) {
        if (this != &o) {
            path_ = o.path_;
            records_ = o.records_;
            index_ = o.index_;
        }
        return *this;
    }

    // Validates every line; on any failure throws listing all offending lines.
    static std::vector<decision_record> parse_file(const std::filesystem::path& path) {
        std::vector<decision_record> out;
        std::string problems;
        std::size_t line_no = 0;
        for (const auto& line : io::read_lines(path)) {
            ++line_no;
            if (text::trim(line).empty()) continue;
            try {
                out.push_back(parse_decision(nlohmann::json::parse(line)));
            } catch (const std::exception& e) {
                problems += "\n  line " + std::to_string(line_no) + ": " + e.what();
            }
        }
        if (!problems.empty()) throw validation_error(path.string() + ": invalid decisions:" + problems);
        return out;
    }

    // Later records for the same (kind, key) supersede earlier ones.
    std::optional<std::string> find(decision_kind kind, const std::string& key) const {
        std::lock_guard lock(mu_);
        auto it = index_.find({kind, key});
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    void append(const decision_record& d) {
        std::lock_guard lock(mu_);
        if (!path_.empty()) io::append_line(path_, nlohmann::json(d).dump());
        remember_locked(d);
    }

    // Adds to memory only; used for decisions that never reach disk.
    void remember(decision_record d) {
        std::lock_guard lock(mu_);
        remember_locked(std::move(d));
    }

    std::vector<decision_record> records() const {
        std::lock_guard lock(mu_);
        return records_;
    }

    std::map<std::string, std::string> verdicts(decision_kind kind) const {
        std::lock_guard lock(mu_);
        std::map<std::string, std::string> out;
        for (const auto& [k, v] : index_)
            if (k.first == kind) out[k.second] = v;
        return out;
    }

    const std::filesystem::path& path() const { return path_; }

private:
    void remember_locked(decision_record d) {
        index_[{d.kind, d.key}] = d.verdict;
        records_.push_back(std::move(d));
    }

    std::filesystem::path path_;
    std::vector<decision_record> records_;
    std::map<std::pair<decision_kind, std::string>, std::string> index_;
    mutable std::mutex mu_;
};

} // namespace evsent
