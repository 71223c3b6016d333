#pragma once

// Offline corpus: users, user-curated lists and tweets, loaded from JSON Lines
// and indexed in memory. Ingestion is exclusive; queries are const and safe to
// run concurrently once ingestion has finished.

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "evsent/error.hpp"
#include "evsent/io.hpp"
#include "evsent/text.hpp"
#include "evsent/time.hpp"

namespace evsent {

struct user_profile {
    std::string id;
    std::string handle;
    std::string display_name;
    std::optional<std::string> location;
    std::optional<std::string> description;
    bool is_protected = false;

    friend bool operator==(const user_profile&, const user_profile&) = default;
};

struct list_record {
    std::string id;
    std::string label;
    std::string owner_id;
    std::vector<std::string> member_ids;

    friend bool operator==(const list_record&, const list_record&) = default;
};

struct tweet {
    std::string id;
    std::string user_id;
    std::string text;
    timestamp created_at;
    std::optional<std::string> lang;
    bool is_retweet = false;

    friend bool operator==(const tweet&, const tweet&) = default;
};

enum class record_kind { users, lists, tweets };

inline record_kind parse_record_kind(std::string_view s) {
    if (s == "users") return record_kind::users;
    if (s == "lists") return record_kind::lists;
    if (s == "tweets") return record_kind::tweets;
    throw usage_error("unknown record kind '" + std::string(s) + "' (expected users, lists or tweets)");
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw validation_error(std::string("missing field \"") + key + "\"");
    return *it;
}

inline std::string require_string(const nlohmann::json& j, const char* key, bool non_empty = false) {
    const auto& v = require(j, key);
    if (!v.is_string()) throw validation_error(std::string("field \"") + key + "\" must be a string");
    auto s = v.get<std::string>();
    if (non_empty && s.empty()) throw validation_error(std::string("field \"") + key + "\" must be non-empty");
    return s;
}

inline std::optional<std::string> optional_string(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw validation_error(std::string("field \"") + key + "\" must be a string or null");
    return it->get<std::string>();
}

inline bool optional_bool(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return false;
    if (!it->is_boolean()) throw validation_error(std::string("field \"") + key + "\" must be a boolean");
    return it->get<bool>();
}

inline nlohmann::json nullable(const std::optional<std::string>& s) {
    return s ? nlohmann::json(*s) : nlohmann::json(nullptr);
}

} // namespace detail

inline void to_json(nlohmann::json& j, const user_profile& u) {
    j = nlohmann::json{{"id", u.id},
                       {"handle", u.handle},
                       {"display_name", u.display_name},
                       {"location", detail::nullable(u.location)},
                       {"description", detail::nullable(u.description)},
                       {"protected", u.is_protected}};
}

inline void from_json(const nlohmann::json& j, user_profile& u) {
    if (!j.is_object()) throw validation_error("user record must be a JSON object");
    u.id = detail::require_string(j, "id", true);
    u.handle = detail::require_string(j, "handle", true);
    u.display_name = j.contains("display_name") ? detail::require_string(j, "display_name") : std::string{};
    u.location = detail::optional_string(j, "location");
    u.description = detail::optional_string(j, "description");
    u.is_protected = detail::optional_bool(j, "protected");
}

inline void to_json(nlohmann::json& j, const list_record& l) {
    j = nlohmann::json{{"id", l.id}, {"label", l.label}, {"owner_id", l.owner_id}, {"member_ids", l.member_ids}};
}

inline void from_json(const nlohmann::json& j, list_record& l) {
    if (!j.is_object()) throw validation_error("list record must be a JSON object");
    l.id = detail::require_string(j, "id", true);
    l.label = detail::require_string(j, "label");
    l.owner_id = detail::require_string(j, "owner_id");
    const auto& members = detail::require(j, "member_ids");
    if (!members.is_array()) throw validation_error("field \"member_ids\" must be an array");
    l.member_ids.clear();
    std::set<std::string> seen;
    for (const auto& m : members) {
        if (!m.is_string()) throw validation_error("member_ids entries must be strings");
        auto id = m.get<std::string>();
        if (seen.insert(id).second) l.member_ids.push_back(std::move(id));
        else spdlog::warn("list {}: duplicate member {} dropped", l.id, id);
    }
}

inline void to_json(nlohmann::json& j, const tweet& t) {
    j = nlohmann::json{{"id", t.id},
                       {"user_id", t.user_id},
                       {"text", t.text},
                       {"created_at", format_iso8601(t.created_at)},
                       {"lang", detail::nullable(t.lang)},
                       {"is_retweet", t.is_retweet}};
}

inline void from_json(const nlohmann::json& j, tweet& t) {
    if (!j.is_object()) throw validation_error("tweet record must be a JSON object");
    t.id = detail::require_string(j, "id", true);
    t.user_id = detail::require_string(j, "user_id", true);
    const auto& text = detail::require(j, "text");
    if (!text.is_string()) throw validation_error("field \"text\" must be a string");
    t.text = text.get<std::string>();
    const auto created = detail::require_string(j, "created_at");
    auto ts = try_parse_iso8601(created);
    if (!ts) throw validation_error("field \"created_at\" is not ISO-8601: '" + created + "'");
    t.created_at = *ts;
    t.lang = detail::optional_string(j, "lang");
    t.is_retweet = detail::optional_bool(j, "is_retweet");
}

// created_at ascending, then id.
inline bool chronological(const tweet& a, const tweet& b) {
    return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id);
}

// created_at descending, then id.
inline bool newest_first(const tweet& a, const tweet& b) {
    return std::tie(b.created_at, a.id) < std::tie(a.created_at, b.id);
}

class corpus_store {
public:
    explicit corpus_store(std::size_t max_text_length = 280) : max_text_length_(max_text_length) {}

    // Parses the whole file before committing anything: a malformed line
    // rejects the file and leaves the store untouched.
    std::size_t ingest_jsonl(const std::filesystem::path& path, record_kind kind) {
        std::ifstream in(path);
        if (!in) throw io_error("cannot read " + path.string());
        return ingest_jsonl(in, kind, path.string());
    }

    std::size_t ingest_jsonl(const std::filesystem::path& path, std::string_view kind) {
        return ingest_jsonl(path, parse_record_kind(kind));
    }

    std::size_t ingest_jsonl(std::istream& in, record_kind kind, const std::string& source_name) {
        using record = std::variant<user_profile, list_record, tweet>;
        std::vector<record> parsed;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (text::trim(line).empty()) continue;
            try {
                auto j = nlohmann::json::parse(line);
                switch (kind) {
                case record_kind::users: parsed.emplace_back(j.get<user_profile>()); break;
                case record_kind::lists: parsed.emplace_back(j.get<list_record>()); break;
                case record_kind::tweets: parsed.emplace_back(j.get<tweet>()); break;
                }
            } catch (const nlohmann::json::exception& e) {
                throw parse_error(source_name, line_no, e.what());
            } catch (const validation_error& e) {
                throw parse_error(source_name, line_no, e.what());
            }
        }
        if (in.bad()) throw io_error("read failure on " + source_name);
        for (auto& r : parsed) std::visit([this](auto&& v) { add(std::move(v)); }, r);
        return parsed.size();
    }

    void add(user_profile u) {
        if (users_.count(u.id)) spdlog::warn("duplicate user id {} overwritten", u.id);
        users_[u.id] = std::move(u);
    }

    void add(list_record l) {
        if (auto it = lists_.find(l.id); it != lists_.end()) {
            spdlog::warn("duplicate list id {} overwritten", l.id);
            for (const auto& m : it->second.member_ids) member_lists_[m].erase(l.id);
        }
        for (const auto& m : l.member_ids) member_lists_[m].insert(l.id);
        lists_[l.id] = std::move(l);
    }

    void add(tweet t) {
        if (auto it = tweets_.find(t.id); it != tweets_.end()) {
            spdlog::warn("duplicate tweet id {} overwritten", t.id);
            by_time_.erase({it->second.created_at, it->first});
            user_tweets_[it->second.user_id].erase(it->first);
        }
        if (text::code_point_count(t.text) > max_text_length_)
            spdlog::warn("tweet {} exceeds {} code points", t.id, max_text_length_);
        by_time_.insert({t.created_at, t.id});
        user_tweets_[t.user_id].insert(t.id);
        tweets_[t.id] = std::move(t);
    }

    // Inclusive on both ends; ordered by created_at then id.
    std::vector<tweet> tweets_in_window(timestamp start, timestamp end) const {
        if (start > end) throw usage_error("window start is after window end");
        std::vector<tweet> out;
        for (auto it = by_time_.lower_bound({start, std::string{}}); it != by_time_.end() && it->first <= end; ++it)
            out.push_back(tweets_.at(it->second));
        return out;
    }

    std::vector<tweet> tweets_in_window(const time_window& w) const { return tweets_in_window(w.start, w.end); }

    // Newest first; unknown users yield an empty sequence.
    std::vector<tweet> tweets_by_user(std::string_view user_id) const {
        std::vector<tweet> out;
        auto it = user_tweets_.find(std::string(user_id));
        if (it == user_tweets_.end()) return out;
        for (const auto& id : it->second) out.push_back(tweets_.at(id));
        std::sort(out.begin(), out.end(), newest_first);
        return out;
    }

    std::vector<list_record> lists_containing(std::string_view user_id) const {
        std::vector<list_record> out;
        auto it = member_lists_.find(std::string(user_id));
        if (it == member_lists_.end()) return out;
        for (const auto& id : it->second) out.push_back(lists_.at(id));
        return out;
    }

    const user_profile* find_user(std::string_view id) const { return find_in(users_, id); }
    const list_record* find_list(std::string_view id) const { return find_in(lists_, id); }
    const tweet* find_tweet(std::string_view id) const { return find_in(tweets_, id); }

    const std::map<std::string, user_profile>& users() const { return users_; }
    const std::map<std::string, list_record>& lists() const { return lists_; }
    const std::map<std::string, tweet>& tweets() const { return tweets_; }

    std::vector<tweet> all_tweets() const {
        std::vector<tweet> out;
        out.reserve(tweets_.size());
        for (const auto& [key, id] : by_time_) out.push_back(tweets_.at(id));
        return out;
    }

    std::size_t user_count() const { return users_.size(); }
    std::size_t list_count() const { return lists_.size(); }
    std::size_t tweet_count() const { return tweets_.size(); }
    std::size_t max_text_length() const { return max_text_length_; }

    // users.jsonl, lists.jsonl and tweets.jsonl under dir, ordered by id.
    void export_jsonl(const std::filesystem::path& dir) const {
        io::write_file_atomic(dir / "users.jsonl", dump_lines(users_));
        io::write_file_atomic(dir / "lists.jsonl", dump_lines(lists_));
        io::write_file_atomic(dir / "tweets.jsonl", dump_lines(tweets_));
    }

    void ingest_directory(const std::filesystem::path& dir) {
        ingest_jsonl(dir / "users.jsonl", record_kind::users);
        ingest_jsonl(dir / "lists.jsonl", record_kind::lists);
        ingest_jsonl(dir / "tweets.jsonl", record_kind::tweets);
    }

    friend bool operator==(const corpus_store& a, const corpus_store& b) {
        return a.users_ == b.users_ && a.lists_ == b.lists_ && a.tweets_ == b.tweets_;
    }

private:
    template <typename Map>
    static const typename Map::mapped_type* find_in(const Map& m, std::string_view id) {
        auto it = m.find(std::string(id));
        return it == m.end() ? nullptr : &it->second;
    }

    template <typename Map>
    static std::string dump_lines(const Map& m) {
        std::string out;
        for (const auto& [id, rec] : m) {
            out += nlohmann::json(rec).dump();
            out += '\n';
        }
        return out;
    }

    std::size_t max_text_length_;
    std::map<std::string, user_profile> users_;
    std::map<std::string, list_record> lists_;
    std::map<std::string, tweet> tweets_;
    std::set<std::pair<timestamp, std::string>> by_time_;
    std::map<std::string, std::set<std::string>> user_tweets_;
    std::map<std::string, std::set<std::string>> member_lists_;
};

} // namespace evsent
