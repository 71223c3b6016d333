#pragma once

// Stage driver: ingest, snowball, fetch, events, normalize, classify,
// evaluate, report. Every stage reads its inputs from the output directory,
// writes its artifacts atomically, and can be re-run.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <csignal>
#include <fcntl.h>
#include <unistd.h>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "evsent/corpus.hpp"
#include "evsent/decisions.hpp"
#include "evsent/error.hpp"
#include "evsent/event_filter.hpp"
#include "evsent/gateway.hpp"
#include "evsent/io.hpp"
#include "evsent/metrics.hpp"
#include "evsent/normalizer.hpp"
#include "evsent/sentiment.hpp"
#include "evsent/snowball.hpp"
#include "evsent/time.hpp"

namespace evsent {

namespace fs = std::filesystem;

enum exit_status : int { exit_ok = 0, exit_failure = 1, exit_missing_input = 2, exit_pending = 3, exit_invalid = 4 };

class missing_input_error : public error {
public:
    explicit missing_input_error(const fs::path& p, const std::string& stage)
        : error("stage " + stage + ": missing input " + p.string()), path_(p) {}
    const fs::path& path() const noexcept { return path_; }

private:
    fs::path path_;
};

class pending_decisions_error : public error {
public:
    pending_decisions_error(const fs::path& review_file, std::size_t count)
        : error(std::to_string(count) + " decision(s) pending, see " + review_file.string()),
          review_file_(review_file), count_(count) {}
    const fs::path& review_file() const noexcept { return review_file_; }
    std::size_t count() const noexcept { return count_; }

private:
    fs::path review_file_;
    std::size_t count_;
};

class lock_error : public error {
public:
    using error::error;
};

inline int exit_status_of(const std::exception& e) {
    if (dynamic_cast<const missing_input_error*>(&e)) return exit_missing_input;
    if (dynamic_cast<const pending_decisions_error*>(&e)) return exit_pending;
    if (dynamic_cast<const validation_error*>(&e) || dynamic_cast<const parse_error*>(&e) ||
        dynamic_cast<const usage_error*>(&e))
        return exit_invalid;
    return exit_failure;
}

// ------------------------------------------------------------------ config

struct evaluation_config {
    std::size_t precision_sample = 30;
    std::size_t recall_sample = 50;
    std::size_t sentiment_sample = 30;
    std::size_t top_contributors = 5;
};

struct pipeline_config {
    fs::path source;   // the config file itself
    std::uint64_t seed = 0;
    fs::path output_dir;
    fs::path users, lists, tweets;

    std::string backend = "fixture"; // fixture | http
    std::string base_url;
    std::vector<credential> credentials;
    gateway_options gateway;
    int timeline_cap = 3200;
    bool simulated_clock = true;
    timestamp clock_start = parse_iso8601("2015-01-01T00:00:00Z");

    snowball_config snowball;
    fs::path events;
    fs::path acronyms, known_words, lemma_exceptions;
    lexicon_paths lexicons;
    fs::path stopwords;
    fs::path decisions;
    evaluation_config evaluation;

    fs::path out(const std::string& rel) const { return output_dir / rel; }
};

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_relative() ? (base / path).lexically_normal() : path;
}

inline const nlohmann::json& need(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key) || j[key].is_null())
        throw validation_error(where + ": missing required key \"" + key + "\"");
    return j[key];
}

template <typename T>
T get_as(const nlohmann::json& j, const char* key, const std::string& where) {
    try {
        return need(j, key, where).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(where + "." + key + ": " + e.what());
    }
}

inline void require_file(const fs::path& p, const std::string& what) {
    if (!fs::is_regular_file(p)) throw validation_error(what + " does not exist: " + p.string());
}

} // namespace detail

// A single JSON document. Relative paths resolve against its directory.
// normalization and lexicons accept either a directory holding the shipped
// file names or an object naming each file.
inline pipeline_config load_pipeline_config(const fs::path& path) {
    using detail::get_as;
    using detail::need;
    if (!fs::is_regular_file(path)) throw validation_error("config file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path.string(), 0, e.what());
    }
    const std::string where = path.filename().string();
    const fs::path base = fs::absolute(path).parent_path();
    auto file = [&](const nlohmann::json& obj, const char* key, const std::string& w) {
        return detail::resolve(base, get_as<std::string>(obj, key, w));
    };

    pipeline_config c;
    c.source = path;
    c.seed = get_as<std::uint64_t>(j, "seed", where);
    c.output_dir = file(j, "output_dir", where);

    const auto& corpus = need(j, "corpus", where);
    c.users = file(corpus, "users", where + ".corpus");
    c.lists = file(corpus, "lists", where + ".corpus");
    c.tweets = file(corpus, "tweets", where + ".corpus");

    const auto& gw = need(j, "gateway", where);
    const std::string gw_where = where + ".gateway";
    c.backend = get_as<std::string>(gw, "backend", gw_where);
    if (c.backend != "fixture" && c.backend != "http")
        throw validation_error(gw_where + ".backend must be \"fixture\" or \"http\"");
    if (c.backend == "http") c.base_url = get_as<std::string>(gw, "base_url", gw_where);
    for (const auto& cred : need(gw, "credentials", gw_where)) {
        credential k;
        k.key_id = get_as<std::string>(cred, "key_id", gw_where + ".credentials");
        k.budget = cred.value("budget", 15);
        k.window = std::chrono::seconds(cred.value("window_seconds", 900));
        c.credentials.push_back(k);
    }
    if (c.credentials.empty()) throw validation_error(gw_where + ".credentials must be non-empty");
    c.gateway.page_limit = gw.value("page_limit", 200);
    c.gateway.max_retries = gw.value("max_retries", 3);
    c.timeline_cap = gw.value("timeline_cap", 3200);
    const auto clock = gw.value("clock", std::string("simulated"));
    if (clock != "simulated" && clock != "system") throw validation_error(gw_where + ".clock must be simulated or system");
    c.simulated_clock = clock == "simulated";
    if (gw.contains("clock_start")) {
        auto t = try_parse_iso8601(gw["clock_start"].get<std::string>());
        if (!t) throw validation_error(gw_where + ".clock_start is not an ISO-8601 time");
        c.clock_start = *t;
    }

    const auto& sb = need(j, "snowball", where);
    const std::string sb_where = where + ".snowball";
    c.snowball.seed_user_ids = get_as<std::set<std::string>>(sb, "seed_user_ids", sb_where);
    c.snowball.label_keywords = get_as<std::set<std::string>>(sb, "label_keywords", sb_where);
    c.snowball.max_rounds = sb.value("max_rounds", 3);
    c.snowball.target_size = sb.value("target_size", std::size_t{1000});
    if (sb.contains("profile_filter") && !sb["profile_filter"].is_null()) {
        profile_filter f;
        f.location_keywords = sb["profile_filter"].value("location_keywords", std::vector<std::string>{});
        f.description_keywords = sb["profile_filter"].value("description_keywords", std::vector<std::string>{});
        c.snowball.filter = f;
    }
    const auto policy = sb.value("on_pending", std::string("block"));
    if (policy != "block" && policy != "reject") throw validation_error(sb_where + ".on_pending must be block or reject");
    c.snowball.on_pending = policy == "block" ? pending_policy::block : pending_policy::reject;
    try {
        c.snowball.validate();
    } catch (const usage_error& e) {
        throw validation_error(e.what());
    }

    c.events = file(j, "events", where);

    const auto& norm = need(j, "normalization", where);
    if (norm.is_string()) {
        const auto dir = detail::resolve(base, norm.get<std::string>());
        c.acronyms = dir / "acronyms.tsv";
        c.known_words = dir / "known_words.txt";
        c.lemma_exceptions = dir / "lemma_exceptions.tsv";
    } else {
        c.acronyms = file(norm, "acronyms", where + ".normalization");
        c.known_words = file(norm, "known_words", where + ".normalization");
        c.lemma_exceptions = file(norm, "lemma_exceptions", where + ".normalization");
    }

    const auto& lex = need(j, "lexicons", where);
    if (lex.is_string()) {
        c.lexicons = lexicon_paths::in(detail::resolve(base, lex.get<std::string>()));
    } else {
        const std::string w = where + ".lexicons";
        c.lexicons = {file(lex, "valence", w), file(lex, "negators", w), file(lex, "intensifiers", w),
                      file(lex, "emotions", w), file(lex, "emoticons", w)};
    }
    if (j.contains("stopwords") && !j["stopwords"].is_null()) c.stopwords = file(j, "stopwords", where);
    c.decisions = j.contains("decisions") && !j["decisions"].is_null() ? file(j, "decisions", where)
                                                                      : c.output_dir / "decisions.jsonl";
    if (j.contains("evaluation")) {
        const auto& ev = j["evaluation"];
        c.evaluation.precision_sample = ev.value("precision_sample", std::size_t{30});
        c.evaluation.recall_sample = ev.value("recall_sample", std::size_t{50});
        c.evaluation.sentiment_sample = ev.value("sentiment_sample", std::size_t{30});
        c.evaluation.top_contributors = ev.value("top_contributors", std::size_t{5});
        if (!c.evaluation.precision_sample || !c.evaluation.recall_sample || !c.evaluation.sentiment_sample ||
            !c.evaluation.top_contributors)
            throw validation_error(where + ".evaluation sizes must be >= 1");
    }

    detail::require_file(c.users, "corpus.users");
    detail::require_file(c.lists, "corpus.lists");
    detail::require_file(c.tweets, "corpus.tweets");
    detail::require_file(c.events, "events");
    detail::require_file(c.acronyms, "normalization acronyms");
    detail::require_file(c.known_words, "normalization known_words");
    detail::require_file(c.lemma_exceptions, "normalization lemma_exceptions");
    for (const auto& p : {c.lexicons.valence, c.lexicons.negators, c.lexicons.intensifiers, c.lexicons.emotions,
                          c.lexicons.emoticons})
        detail::require_file(p, "lexicon");
    if (!c.stopwords.empty()) detail::require_file(c.stopwords, "stopwords");
    return c;
}

// --------------------------------------------------------------- lock file

// One pipeline invocation per output directory. A lock left behind by a dead
// process is taken over.
class run_lock {
public:
    explicit run_lock(const fs::path& dir) : path_(dir / ".pipeline.lock") {
        fs::create_directories(dir);
        for (int attempt = 0; attempt < 2; ++attempt) {
            const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
            if (fd >= 0) {
                const auto pid = std::to_string(::getpid()) + "\n";
                [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
                ::close(fd);
                held_ = true;
                return;
            }
            if (!stale()) break;
            spdlog::warn("removing stale lock {}", path_.string());
            fs::remove(path_);
        }
        throw lock_error("output directory is locked by another run: " + path_.string());
    }

    ~run_lock() {
        if (held_) {
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }

    run_lock(const run_lock&) = delete;
    run_lock& operator=(const run_lock&) = delete;

private:
    bool stale() const {
        std::ifstream in(path_);
        long pid = 0;
        if (!(in >> pid) || pid <= 0) return true;
        return ::kill(static_cast<pid_t>(pid), 0) != 0 && errno == ESRCH;
    }

    fs::path path_;
    bool held_ = false;
};

// ------------------------------------------------------------ artifacts

namespace artifact {
inline const char* manifest = "manifest.json";
inline const char* store = "store";
inline const char* community = "community.json";
inline const char* labels_pending = "review/labels.pending.json";
inline const char* timeline = "timeline";
inline const char* fetch = "fetch.json";
inline const char* keywords_pending = "review/keywords.pending.json";
inline const char* matches = "matches.json";
inline const char* normalized = "normalized.jsonl";
inline const char* verdicts = "verdicts.jsonl";
inline const char* samples = "samples.jsonl";
inline const char* evaluation = "evaluation.json";
inline const char* reports = "reports";
} // namespace artifact

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"ingest",    "snowball", "fetch",    "events",
                                                "normalize", "classify", "evaluate", "report"};
    return names;
}

namespace detail {

inline fs::path need_input(const pipeline_config& c, const char* rel, const std::string& stage) {
    auto p = c.out(rel);
    if (!fs::exists(p)) throw missing_input_error(p, stage);
    return p;
}

inline nlohmann::json read_json(const fs::path& p) {
    try {
        return nlohmann::json::parse(io::read_file(p));
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(p.string(), 0, e.what());
    }
}

inline void write_json(const fs::path& p, const nlohmann::json& j) { io::write_file_atomic(p, j.dump(2) + "\n"); }

inline void remove_if_exists(const fs::path& p) {
    std::error_code ec;
    fs::remove(p, ec);
}

inline corpus_store load_store(const fs::path& dir) {
    corpus_store s;
    s.ingest_directory(dir);
    return s;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

// Per-task seed so adding an event never reshuffles another event's samples.
inline std::uint64_t task_seed(std::uint64_t seed, std::string_view task_id) { return seed ^ fnv1a64(task_id); }

struct gateway_bundle {
    corpus_store store;
    std::unique_ptr<source_backend> backend;
    std::unique_ptr<clock_source> clock;
    std::unique_ptr<source_gateway> gateway;
};

inline std::unique_ptr<gateway_bundle> make_gateway(const pipeline_config& c, const std::string& stage) {
    auto g = std::make_unique<gateway_bundle>();
    if (c.backend == "fixture") {
        g->store = load_store(need_input(c, artifact::store, stage));
        g->backend = std::make_unique<fixture_backend>(g->store);
    } else {
        g->backend = std::make_unique<http_backend>(c.base_url);
    }
    if (c.simulated_clock)
        g->clock = std::make_unique<simulated_clock>(std::chrono::time_point_cast<std::chrono::milliseconds>(c.clock_start));
    else
        g->clock = std::make_unique<system_clock_source>();
    g->gateway = std::make_unique<source_gateway>(*g->backend, c.credentials, *g->clock, c.gateway);
    return g;
}

struct event_result {
    std::string name;
    time_window window;
    std::set<std::string> seeds;
    std::set<std::string> approved;
    std::set<std::string> rejected;
    std::size_t seed_only = 0;
    event_match match;
};

inline std::vector<event_result> load_matches(const fs::path& p) {
    const auto j = read_json(p);
    std::vector<event_result> out;
    for (const auto& e : j.at("events")) {
        event_result r;
        r.name = e.at("name").get<std::string>();
        r.window = {parse_iso8601(e.at("window").at("start").get<std::string>()),
                    parse_iso8601(e.at("window").at("end").get<std::string>())};
        r.seeds = e.at("seed_keywords").get<std::set<std::string>>();
        r.approved = e.at("approved_keywords").get<std::set<std::string>>();
        r.rejected = e.at("rejected_keywords").get<std::set<std::string>>();
        r.seed_only = e.at("seed_only_tweets").get<std::size_t>();
        r.match = event_match_from_json(e.at("match"));
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<sentiment_verdict> load_verdicts(const fs::path& p) {
    std::vector<sentiment_verdict> out;
    std::size_t n = 0;
    for (const auto& line : io::read_lines(p)) {
        ++n;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(verdict_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(p.string(), n, e.what());
        }
    }
    return out;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string csv_row(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_field(cells[i]);
    return out + "\n";
}

inline nlohmann::json metric_json(const std::optional<sample_task>& task, std::optional<ratio> value) {
    if (!task) return nullptr;
    nlohmann::json j{{"task_id", task->task_id}, {"size", task->items.size()}, {"labeled", task->labeled()}};
    if (value) {
        j["value"] = value->fixed(2);
        j["exact"] = std::to_string(value->num()) + "/" + std::to_string(value->den());
    } else {
        j["value"] = nullptr;
    }
    return j;
}

} // namespace detail

// ----------------------------------------------------------------- stages

inline void stage_ingest(const pipeline_config& c) {
    corpus_store s;
    const auto users = s.ingest_jsonl(c.users, record_kind::users);
    const auto lists = s.ingest_jsonl(c.lists, record_kind::lists);
    const auto tweets = s.ingest_jsonl(c.tweets, record_kind::tweets);
    s.export_jsonl(c.out(artifact::store));
    detail::write_json(c.out(artifact::manifest),
                       {{"seed", c.seed},
                        {"records_read", {{"users", users}, {"lists", lists}, {"tweets", tweets}}},
                        {"stored", {{"users", s.user_count()}, {"lists", s.list_count()}, {"tweets", s.tweet_count()}}}});
    spdlog::info("ingest: {} users, {} lists, {} tweets", s.user_count(), s.list_count(), s.tweet_count());
}

inline void stage_snowball(const pipeline_config& c) {
    auto g = detail::make_gateway(c, "snowball");
    snowball_sampler sampler(c.snowball, *g->gateway, decision_log(c.decisions));
    auto community = sampler.run();
    const auto pending_file = c.out(artifact::labels_pending);
    if (community.stop_reason == "pending") {
        const auto& round = community.rounds.back();
        auto items = nlohmann::json::array();
        for (const auto& label : round.pending_labels)
            items.push_back({{"label", label}, {"lists", round.label_lists.at(label)}});
        detail::write_json(pending_file, {{"stage", "snowball"}, {"round", round.index}, {"items", items}});
        detail::remove_if_exists(c.out(artifact::community));
        throw pending_decisions_error(pending_file, round.pending_labels.size());
    }
    detail::remove_if_exists(pending_file);
    nlohmann::json j = community;
    j["seed"] = c.seed;
    detail::write_json(c.out(artifact::community), j);
    spdlog::info("snowball: {} members after {} round(s), stop: {}", community.members.size(), community.rounds.size(),
                 community.stop_reason);
}

inline void stage_fetch(const pipeline_config& c) {
    const auto community = community_from_json(detail::read_json(detail::need_input(c, artifact::community, "fetch")));
    auto g = detail::make_gateway(c, "fetch");
    std::vector<std::string> ids;
    for (const auto& [id, m] : community.members) ids.push_back(id);
    const auto results = g->gateway->fetch_timelines(ids, c.timeline_cap);

    corpus_store timeline;
    std::size_t pages = 0;
    auto denied = nlohmann::json::array();
    auto errors = nlohmann::json::array();
    for (const auto& r : results) {
        pages += r.pages;
        if (r.access_denied) denied.push_back(r.user_id);
        if (r.error) errors.push_back({{"user_id", r.user_id}, {"error", *r.error}});
        for (const auto& t : r.tweets) timeline.add(t);
    }
    for (const auto& id : ids) {
        if (const auto* u = g->store.find_user(id)) timeline.add(*u);
        else timeline.add(user_profile{id, id, id, std::nullopt, std::nullopt, false});
    }
    timeline.export_jsonl(c.out(artifact::timeline));
    detail::write_json(c.out(artifact::fetch), {{"seed", c.seed},
                                                {"users", ids.size()},
                                                {"tweets", timeline.tweet_count()},
                                                {"pages", pages},
                                                {"access_denied", denied},
                                                {"errors", errors}});
    spdlog::info("fetch: {} tweets from {} users in {} pages", timeline.tweet_count(), ids.size(), pages);
}

inline void stage_events(const pipeline_config& c) {
    const auto store = detail::load_store(detail::need_input(c, artifact::timeline, "events"));
    const auto events = load_events(c.events);
    const decision_log log(c.decisions);
    const stopword_set default_stop = c.stopwords.empty() ? stopword_set{} : load_stopwords(c.stopwords);

    std::vector<detail::event_result> results;
    auto pending = nlohmann::json::array();
    for (const auto& e : events) {
        const auto stop = e.expansion.stopword_file.empty() ? default_stop : load_stopwords(e.expansion.stopword_file);
        const auto seeds = keyword_set::from_seeds(e.seed_keywords);
        detail::event_result r;
        r.name = e.name;
        r.window = e.window;
        r.seeds = seeds.seeds;
        for (const auto& cand : propose_keywords(store, e, seeds, stop)) {
            const auto v = log.find(decision_kind::keyword, keyword_key(e.name, cand.token));
            if (!v) {
                auto examples = nlohmann::json::array();
                for (const auto& t : store.tweets_in_window(e.window)) {
                    if (examples.size() >= 3) break;
                    if (text::fold_case(t.text).find(cand.token) != std::string::npos) examples.push_back(t.text);
                }
                pending.push_back({{"event", e.name}, {"token", cand.token}, {"count", cand.count}, {"examples", examples}});
            } else {
                (*v == "accept" ? r.approved : r.rejected).insert(cand.token);
            }
        }
        results.push_back(std::move(r));
    }
    const auto pending_file = c.out(artifact::keywords_pending);
    if (!pending.empty()) {
        detail::write_json(pending_file, {{"stage", "events"}, {"items", pending}});
        detail::remove_if_exists(c.out(artifact::matches));
        throw pending_decisions_error(pending_file, pending.size());
    }
    detail::remove_if_exists(pending_file);

    auto out = nlohmann::json::array();
    for (std::size_t i = 0; i < events.size(); ++i) {
        auto& r = results[i];
        const auto rm = expand_and_rematch(store, events[i], r.approved);
        r.seed_only = rm.seed_only.size();
        out.push_back({{"name", r.name},
                       {"window", {{"start", format_iso8601(r.window.start)}, {"end", format_iso8601(r.window.end)}}},
                       {"seed_keywords", r.seeds},
                       {"approved_keywords", r.approved},
                       {"rejected_keywords", r.rejected},
                       {"seed_only_tweets", r.seed_only},
                       {"match", rm.expanded}});
        spdlog::info("events: {} matched {} tweets ({} with seeds only)", r.name, rm.expanded.size(), r.seed_only);
    }
    detail::write_json(c.out(artifact::matches), {{"seed", c.seed}, {"events", out}});
}

inline void stage_normalize(const pipeline_config& c) {
    const auto events = detail::load_matches(detail::need_input(c, artifact::matches, "normalize"));
    const auto store = detail::load_store(detail::need_input(c, artifact::timeline, "normalize"));
    normalization_config nc;
    load_acronyms(nc, c.acronyms);
    load_known_words(nc, c.known_words);
    load_lemma_exceptions(nc, c.lemma_exceptions);
    std::set<std::string> ids;
    for (const auto& e : events) ids.insert(e.match.tweet_ids.begin(), e.match.tweet_ids.end());
    std::string out;
    for (const auto& id : ids) {
        const auto* t = store.find_tweet(id);
        if (!t) throw validation_error("matched tweet " + id + " is not in the timeline store");
        out += nlohmann::json(normalize(*t, nc)).dump() + "\n";
    }
    io::write_file_atomic(c.out(artifact::normalized), out);
    spdlog::info("normalize: {} tweets", ids.size());
}

inline void stage_classify(const pipeline_config& c) {
    const auto path = detail::need_input(c, artifact::normalized, "classify");
    const auto lex = load_lexicons(c.lexicons);
    std::string out;
    std::size_t n = 0, line_no = 0;
    for (const auto& line : io::read_lines(path)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        normalized_tweet t;
        try {
            t = normalized_from_json(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(path.string(), line_no, e.what());
        }
        out += nlohmann::json(classify_fine(t.tweet_id, t.normalized, lex)).dump() + "\n";
        out += nlohmann::json(classify_emoticon_first(t.tweet_id, t.normalized, lex)).dump() + "\n";
        ++n;
    }
    io::write_file_atomic(c.out(artifact::verdicts), out);
    spdlog::info("classify: {} tweets with both analyzers", n);
}

// Draws the relevance, recall and sentiment samples and computes whatever
// metrics the current labels allow. Missing labels never block.
inline void stage_evaluate(const pipeline_config& c) {
    const auto events = detail::load_matches(detail::need_input(c, artifact::matches, "evaluate"));
    const auto store = detail::load_store(detail::need_input(c, artifact::timeline, "evaluate"));
    const auto verdicts = detail::load_verdicts(detail::need_input(c, artifact::verdicts, "evaluate"));
    const decision_log log(c.decisions);

    std::map<std::string, polarity3> fine, emo;
    for (const auto& v : verdicts) (v.analyzer == analyzer_id::fine ? fine : emo)[v.tweet_id] = v.collapsed();

    std::vector<sample_task> tasks;
    auto per_event = nlohmann::json::array();
    for (const auto& e : events) {
        auto draw = [&](const std::vector<std::string>& pop, std::size_t n, const std::string& suffix,
                        sample_kind kind, const std::string& pop_name) -> std::optional<sample_task> {
            if (pop.empty()) return std::nullopt;
            const auto id = e.name + "/" + suffix;
            auto t = draw_sample(pop, n, detail::task_seed(c.seed, id), id, kind, pop_name);
            apply_sample_labels(t, log);
            tasks.push_back(t);
            return t;
        };
        const std::set<std::string> matched(e.match.tweet_ids.begin(), e.match.tweet_ids.end());
        std::vector<std::string> unmatched;
        for (const auto& t : store.tweets_in_window(e.window))
            if (!matched.count(t.id)) unmatched.push_back(t.id);

        auto precision_task = draw(e.match.tweet_ids, c.evaluation.precision_sample, "precision", sample_kind::relevance,
                                   "matched:" + e.name);
        auto recall_task = draw(unmatched, c.evaluation.recall_sample, "recall", sample_kind::relevance,
                                "unmatched-window:" + e.name);
        auto sentiment_task = draw(e.match.tweet_ids, c.evaluation.sentiment_sample, "sentiment",
                                   sample_kind::sentiment, "matched:" + e.name);

        auto when_complete = [](const std::optional<sample_task>& t, auto&& fn) -> std::optional<ratio> {
            if (!t || !t->complete()) return std::nullopt;
            try {
                return fn(*t);
            } catch (const undefined_metric_error&) {
                return std::nullopt;
            }
        };
        per_event.push_back(
            {{"name", e.name},
             {"relevance_precision",
              detail::metric_json(precision_task, when_complete(precision_task, [](const sample_task& t) {
                                      return relevance_precision(t);
                                  }))},
             {"recall_estimate", detail::metric_json(recall_task, when_complete(recall_task, [](const sample_task& t) {
                                                         return estimate_recall_by_sampling(t);
                                                     }))},
             {"analyzer_precision",
              {{"fine", detail::metric_json(sentiment_task, when_complete(sentiment_task, [&](const sample_task& t) {
                                                return analyzer_precision(t, fine);
                                            }))},
               {"emoticon", detail::metric_json(sentiment_task, when_complete(sentiment_task, [&](const sample_task& t) {
                                                    return analyzer_precision(t, emo);
                                                }))}}}});
    }
    io::write_file_atomic(c.out(artifact::samples), samples_to_jsonl(tasks));
    detail::write_json(c.out(artifact::evaluation), {{"seed", c.seed}, {"events", per_event}});
    std::size_t unlabeled = 0;
    for (const auto& t : tasks) unlabeled += t.items.size() - t.labeled();
    spdlog::info("evaluate: {} sample task(s), {} item(s) awaiting labels", tasks.size(), unlabeled);
}

enum class report_format { json, csv };

inline void stage_report(const pipeline_config& c, report_format format = report_format::json) {
    const auto events = detail::load_matches(detail::need_input(c, artifact::matches, "report"));
    const auto verdicts = detail::load_verdicts(detail::need_input(c, artifact::verdicts, "report"));
    const auto community = detail::read_json(detail::need_input(c, artifact::community, "report"));
    const auto evaluation = detail::read_json(detail::need_input(c, artifact::evaluation, "report"));
    const auto timeline = detail::load_store(detail::need_input(c, artifact::timeline, "report"));
    const std::size_t community_size = community.at("members").size();

    std::map<std::string, const sentiment_verdict*> fine_by_id, emo_by_id;
    for (const auto& v : verdicts) (v.analyzer == analyzer_id::fine ? fine_by_id : emo_by_id)[v.tweet_id] = &v;
    std::map<std::string, nlohmann::json> eval_by_event;
    for (const auto& e : evaluation.at("events")) eval_by_event[e.at("name").get<std::string>()] = e;

    std::string participation_csv = detail::csv_row({"event", "tweets", "participants", "community_size", "percent"});
    std::string distribution_csv = detail::csv_row({"event", "analyzer", "class", "count", "percent"});
    std::string relevance_csv = detail::csv_row({"event", "relevance_precision", "recall_estimate"});
    std::string analyzer_csv = detail::csv_row({"event", "fine", "emoticon"});

    auto out_events = nlohmann::json::array();
    for (const auto& e : events) {
        std::vector<sentiment_verdict> fine, emo;
        std::map<std::string, std::vector<sentiment_class>> by_user;
        for (const auto& id : e.match.tweet_ids) {
            auto f = fine_by_id.find(id);
            auto m = emo_by_id.find(id);
            if (f == fine_by_id.end() || m == emo_by_id.end())
                throw validation_error("no verdicts for matched tweet " + id + "; re-run classify");
            fine.push_back(*f->second);
            emo.push_back(*m->second);
            if (const auto* t = timeline.find_tweet(id)) by_user[t->user_id].push_back(f->second->fine_class);
        }
        const auto part = participation(e.match, community_size);
        const auto fine_dist = sentiment_distribution(fine);
        const auto emo_dist = sentiment_distribution(emo);
        const auto clusters = category_clusters(by_user);
        auto top = nlohmann::json::array();
        for (const auto& t : top_contributors(e.match, c.evaluation.top_contributors))
            top.push_back({{"user_id", t.user_id}, {"tweets", t.tweets}});
        nlohmann::json agreement = nullptr;
        if (!fine.empty()) {
            const auto a = analyzer_agreement(collapsed_by_tweet(fine), collapsed_by_tweet(emo));
            agreement = {{"fraction", a.fraction.fixed(2)}, {"disagreements", a.disagreements.size()}};
        }
        const auto ev = eval_by_event.count(e.name) ? eval_by_event[e.name] : nlohmann::json(nullptr);
        out_events.push_back({{"name", e.name},
                              {"keywords", {{"seeds", e.seeds}, {"approved", e.approved}}},
                              {"tweets", e.match.size()},
                              {"seed_only_tweets", e.seed_only},
                              {"participation",
                               {{"participants", part.participants},
                                {"community_size", part.community_size},
                                {"percent", part.percent}}},
                              {"distribution", {{"fine", to_json_value(fine_dist)}, {"emoticon", to_json_value(emo_dist)}}},
                              {"category_clusters",
                               {{"users", clusters.users}, {"counts", clusters.counts}, {"percents", clusters.percents}}},
                              {"top_contributors", top},
                              {"agreement", agreement},
                              {"evaluation", ev}});

        participation_csv += detail::csv_row({e.name, std::to_string(e.match.size()), std::to_string(part.participants),
                                              std::to_string(community_size), part.percent});
        for (const auto& [analyzer, dist] : {std::pair{"fine", &fine_dist}, std::pair{"emoticon", &emo_dist}})
            for (const auto& s : dist->classes)
                distribution_csv += detail::csv_row({e.name, analyzer, s.label, std::to_string(s.count), s.percent});
        auto value = [](const nlohmann::json& m) {
            return m.is_object() && m["value"].is_string() ? m["value"].get<std::string>() : std::string{};
        };
        if (ev.is_object()) {
            relevance_csv += detail::csv_row({e.name, value(ev["relevance_precision"]), value(ev["recall_estimate"])});
            analyzer_csv += detail::csv_row(
                {e.name, value(ev["analyzer_precision"]["fine"]), value(ev["analyzer_precision"]["emoticon"])});
        }
    }
    const nlohmann::json report{{"schema_version", 1},
                                {"seed", c.seed},
                                {"community_size", community_size},
                                {"events", out_events}};
    const auto dir = c.out(artifact::reports);
    detail::write_json(dir / "report.json", report);
    if (format == report_format::csv) {
        io::write_file_atomic(dir / "participation.csv", participation_csv);
        io::write_file_atomic(dir / "distribution.csv", distribution_csv);
        io::write_file_atomic(dir / "relevance.csv", relevance_csv);
        io::write_file_atomic(dir / "analyzer_precision.csv", analyzer_csv);
    }
    spdlog::info("report: {} event(s) written to {}", out_events.size(), dir.string());
}

inline void run_stage(const std::string& stage, const pipeline_config& c, report_format format = report_format::json) {
    if (stage == "ingest") stage_ingest(c);
    else if (stage == "snowball") stage_snowball(c);
    else if (stage == "fetch") stage_fetch(c);
    else if (stage == "events") stage_events(c);
    else if (stage == "normalize") stage_normalize(c);
    else if (stage == "classify") stage_classify(c);
    else if (stage == "evaluate") stage_evaluate(c);
    else if (stage == "report") stage_report(c, format);
    else throw usage_error("unknown stage '" + stage + "'");
}

} // namespace evsent
