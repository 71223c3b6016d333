#pragma once

// Rate-limited access to the data source. A backend answers the three source
// queries (lists containing a user, members of a list, a timeline page); the
// gateway charges every backend call against the rate ledger, retries
// transport failures, honors Retry-After and assembles paginated timelines.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "evsent/corpus.hpp"
#include "evsent/error.hpp"
#include "evsent/rate_ledger.hpp"

namespace evsent {

struct timeline_page {
    std::vector<tweet> tweets;
    std::optional<std::string> next_cursor;
};

inline void to_json(nlohmann::json& j, const timeline_page& p) {
    j = nlohmann::json{{"tweets", p.tweets},
                       {"next_cursor", p.next_cursor ? nlohmann::json(*p.next_cursor) : nlohmann::json(nullptr)}};
}

inline void from_json(const nlohmann::json& j, timeline_page& p) {
    p.tweets = detail::require(j, "tweets").get<std::vector<tweet>>();
    p.next_cursor = detail::optional_string(j, "next_cursor");
}

class source_backend {
public:
    virtual ~source_backend() = default;
    virtual std::vector<list_record> lists_containing(const std::string& user_id, const std::string& key_id) = 0;
    virtual std::vector<user_profile> list_members(const std::string& list_id, const std::string& key_id) = 0;
    virtual timeline_page timeline(const std::string& user_id, const std::optional<std::string>& cursor,
                                   int count, const std::string& key_id) = 0;
};

namespace detail {

// Timeline paging over a newest-first tweet vector. Cursors are decimal
// offsets, so they strictly advance.
inline timeline_page page_of(const std::vector<tweet>& newest, const std::optional<std::string>& cursor, int count) {
    std::size_t offset = 0;
    if (cursor) {
        if (!text::all_digits(*cursor)) throw usage_error("bad cursor '" + *cursor + "'");
        offset = std::stoul(*cursor);
    }
    timeline_page page;
    const std::size_t end = std::min(newest.size(), offset + static_cast<std::size_t>(std::max(count, 0)));
    for (std::size_t i = offset; i < end; ++i) page.tweets.push_back(newest[i]);
    if (end < newest.size()) page.next_cursor = std::to_string(end);
    return page;
}

inline std::vector<user_profile> members_of(const corpus_store& store, const list_record& list) {
    std::vector<user_profile> out;
    for (const auto& id : list.member_ids) {
        if (const auto* u = store.find_user(id)) out.push_back(*u);
        else out.push_back(user_profile{id, id, "", std::nullopt, std::nullopt, false});
    }
    return out;
}

} // namespace detail

// Serves queries straight from an in-memory corpus.
class fixture_backend final : public source_backend {
public:
    explicit fixture_backend(const corpus_store& store) : store_(store) {}

    std::vector<list_record> lists_containing(const std::string& user_id, const std::string&) override {
        return store_.lists_containing(user_id);
    }

    std::vector<user_profile> list_members(const std::string& list_id, const std::string&) override {
        const auto* list = store_.find_list(list_id);
        if (!list) return {};
        return detail::members_of(store_, *list);
    }

    timeline_page timeline(const std::string& user_id, const std::optional<std::string>& cursor, int count,
                           const std::string&) override {
        if (const auto* u = store_.find_user(user_id); u && u->is_protected)
            throw access_denied_error("tweets from " + user_id + " are not visible");
        return detail::page_of(store_.tweets_by_user(user_id), cursor, count);
    }

private:
    const corpus_store& store_;
};

// JSON over HTTP:
//   GET /lists?member={user_id}                    -> {"lists":[...]}
//   GET /lists/{id}/members                        -> {"members":[...]}
//   GET /users/{id}/timeline?cursor={c}&count={n}  -> {"tweets":[...],"next_cursor":...}
// The credential travels in the X-Credential header.
class http_backend final : public source_backend {
public:
    explicit http_backend(std::string base_url, std::chrono::seconds timeout = std::chrono::seconds(30))
        : base_url_(std::move(base_url)), timeout_(timeout) {}

    std::vector<list_record> lists_containing(const std::string& user_id, const std::string& key_id) override {
        auto body = get("/lists", {{"member", user_id}}, key_id);
        return detail::require(body, "lists").get<std::vector<list_record>>();
    }

    std::vector<user_profile> list_members(const std::string& list_id, const std::string& key_id) override {
        auto body = get("/lists/" + encode_segment(list_id) + "/members", {}, key_id);
        return detail::require(body, "members").get<std::vector<user_profile>>();
    }

    timeline_page timeline(const std::string& user_id, const std::optional<std::string>& cursor, int count,
                           const std::string& key_id) override {
        httplib::Params params{{"count", std::to_string(count)}};
        if (cursor) params.emplace("cursor", *cursor);
        return get("/users/" + encode_segment(user_id) + "/timeline", params, key_id).get<timeline_page>();
    }

    static std::string encode_segment(const std::string& s) {
        static constexpr char hex[] = "0123456789ABCDEF";
        std::string out;
        for (unsigned char c : s) {
            if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
                out.push_back(static_cast<char>(c));
            } else {
                out.push_back('%');
                out.push_back(hex[c >> 4]);
                out.push_back(hex[c & 0xF]);
            }
        }
        return out;
    }

private:
    nlohmann::json get(const std::string& path, const httplib::Params& params, const std::string& key_id) {
        httplib::Client cli(base_url_);
        cli.set_connection_timeout(timeout_);
        cli.set_read_timeout(timeout_);
        httplib::Headers headers{{"X-Credential", key_id}};
        auto res = cli.Get(path, params, headers);
        if (!res) throw transport_error(key_id, "GET " + path + ": " + httplib::to_string(res.error()));
        if (res->status == 429) {
            long secs = 1;
            if (res->has_header("Retry-After")) {
                try {
                    secs = std::stol(res->get_header_value("Retry-After"));
                } catch (const std::exception&) {
                    secs = 1;
                }
            }
            throw rate_limited_error(std::chrono::seconds(std::max(secs, 0L)), "429 on " + path);
        }
        if (res->status == 403) throw access_denied_error("GET " + path + ": access denied");
        if (res->status != 200)
            throw transport_error(key_id, "GET " + path + ": HTTP " + std::to_string(res->status));
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw transport_error(key_id, "GET " + path + ": bad JSON: " + e.what());
        }
    }

    std::string base_url_;
    std::chrono::seconds timeout_;
};

struct gateway_options {
    int page_limit = 200;
    int max_retries = 3;
    bool blocking = true; // false: surface rate_limited_error instead of waiting
};

struct timeline_fetch {
    std::string user_id;
    std::vector<tweet> tweets; // newest first
    std::size_t pages = 0;
    bool access_denied = false;
    std::optional<std::string> error;
};

class source_gateway {
public:
    source_gateway(source_backend& backend, std::vector<credential> credentials, clock_source& clock,
                   gateway_options options = {})
        : backend_(backend), ledger_(std::move(credentials)), clock_(clock), options_(options) {
        if (options_.page_limit < 1) throw usage_error("page_limit must be >= 1");
        if (options_.max_retries < 0) throw usage_error("max_retries must be >= 0");
    }

    slot_grant acquire_slot(instant now) { return ledger_.acquire_slot(now); }

    std::vector<list_record> fetch_lists_containing(const std::string& user_id) {
        return call([&](const std::string& key) { return backend_.lists_containing(user_id, key); });
    }

    std::vector<user_profile> fetch_list_members(const std::string& list_id) {
        return call([&](const std::string& key) { return backend_.list_members(list_id, key); });
    }

    // Up to `cap` newest tweets, one rate slot per page. Protected accounts
    // come back flagged access_denied with no tweets.
    timeline_fetch fetch_timeline(const std::string& user_id, int cap = 3200) {
        if (cap < 1) throw usage_error("timeline cap must be >= 1");
        timeline_fetch out;
        out.user_id = user_id;
        std::optional<std::string> cursor;
        std::set<std::string> seen_cursors;
        try {
            while (static_cast<int>(out.tweets.size()) < cap) {
                const int want = std::min(options_.page_limit, cap - static_cast<int>(out.tweets.size()));
                auto page = call([&](const std::string& key) { return backend_.timeline(user_id, cursor, want, key); });
                ++out.pages;
                if (static_cast<int>(page.tweets.size()) > want) page.tweets.resize(static_cast<std::size_t>(want));
                for (auto& t : page.tweets) out.tweets.push_back(std::move(t));
                if (!page.next_cursor || page.tweets.empty()) break;
                if (!seen_cursors.insert(*page.next_cursor).second)
                    throw transport_error("-", "cursor cycle on timeline of " + user_id);
                cursor = page.next_cursor;
            }
        } catch (const access_denied_error& e) {
            spdlog::info("skipping protected account {}: {}", user_id, e.what());
            out.tweets.clear();
            out.access_denied = true;
        }
        return out;
    }

    // One worker per credential. Per-user failures are reported in the result
    // rather than thrown; results come back in input order.
    std::vector<timeline_fetch> fetch_timelines(const std::vector<std::string>& user_ids, int cap = 3200) {
        std::vector<timeline_fetch> results(user_ids.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next++; i < user_ids.size(); i = next++) {
                try {
                    results[i] = fetch_timeline(user_ids[i], cap);
                } catch (const error& e) {
                    spdlog::warn("timeline of {} failed: {}", user_ids[i], e.what());
                    results[i].user_id = user_ids[i];
                    results[i].error = e.what();
                }
            }
        };
        const std::size_t n = std::min(ledger_.credentials().size(), std::max<std::size_t>(user_ids.size(), 1));
        std::vector<std::thread> threads;
        for (std::size_t i = 1; i < n; ++i) threads.emplace_back(worker);
        worker();
        for (auto& t : threads) t.join();
        return results;
    }

    const rate_ledger& ledger() const { return ledger_; }
    const gateway_options& options() const { return options_; }

private:
    template <typename F>
    auto call(F&& f) -> decltype(f(std::string{})) {
        int attempt = 0;
        for (;;) {
            const slot_grant g = take_slot();
            try {
                return f(g.credential_id);
            } catch (const rate_limited_error& e) {
                if (attempt++ >= options_.max_retries) throw;
                spdlog::info("source asked {} to retry after {} ms", g.credential_id, e.retry_after().count());
                clock_.sleep_until(clock_.now() + e.retry_after());
            } catch (const transport_error& e) {
                if (attempt++ >= options_.max_retries) throw;
                spdlog::warn("retrying after transport error: {}", e.what());
            }
        }
    }

    slot_grant take_slot() {
        const instant now = clock_.now();
        if (!options_.blocking) {
            if (auto g = ledger_.try_acquire(now)) return *g;
            throw rate_limited_error(ledger_.peek_slot(now).wait, "rate budget exhausted on all credentials");
        }
        auto g = ledger_.acquire_slot(now);
        if (g.wait.count() > 0) {
            spdlog::debug("rate limit: waiting {} ms for {}", g.wait.count(), g.credential_id);
            clock_.sleep_until(g.at);
        }
        return g;
    }

    source_backend& backend_;
    rate_ledger ledger_;
    clock_source& clock_;
    gateway_options options_;
};

} // namespace evsent
