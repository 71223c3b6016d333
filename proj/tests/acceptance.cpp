// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include <boost/regex.hpp>
#include <nlohmann/json.hpp>

#include "e2e_support.hpp"
#include "evsent/event_filter.hpp"
#include "evsent/gateway.hpp"
#include "evsent/metrics.hpp"
#include "evsent/mock_server.hpp"
#include "evsent/normalizer.hpp"
#include "evsent/sentiment.hpp"
#include "evsent/snowball.hpp"
#include "snowball_oracle.hpp"
#include "window_scan.hpp"

using namespace evsent;
using namespace evtest;
using namespace std::chrono_literals;

namespace {

// Collects failures; keeps the first few messages for the summary line.
class checks {
public:
    template <typename A, typename B>
    void eq(const A& a, const B& b, const std::string& what) {
        if (!(a == b)) {
            std::ostringstream os;
            os << what << ": got " << describe(a) << ", want " << describe(b);
            fail(os.str());
        }
    }
    void truth(bool ok, const std::string& what) {
        if (!ok) fail(what);
    }
    void fail(std::string msg) {
        if (notes_.size() < 3) notes_.push_back(std::move(msg));
        ++failures_;
    }
    int failures() const { return failures_; }
    const std::vector<std::string>& notes() const { return notes_; }

private:
    template <typename T>
    static std::string describe(const T& v) {
        if constexpr (requires(std::ostream& o) { o << v; }) {
            std::ostringstream os;
            os << v;
            return os.str();
        } else {
            return "<value>";
        }
    }
    int failures_ = 0;
    std::vector<std::string> notes_;
};

struct criterion {
    std::string name;
    std::chrono::milliseconds budget;
    std::function<void(checks&)> body;
};

const instant t0 = instant{} + std::chrono::hours(24 * 365 * 45);

// --- metric arithmetic -------------------------------------------------------

void metric_arithmetic(checks& c) {
    const std::array<std::pair<std::array<int, 2>, const char*>, 4> prec{
        {{{27, 3}, "0.90"}, {{25, 5}, "0.83"}, {{24, 6}, "0.80"}, {{21, 9}, "0.70"}}};
    for (const auto& [tpfp, want] : prec)
        c.eq(precision({tpfp[0], tpfp[1], 0}).fixed(2), std::string(want),
             "precision(" + std::to_string(tpfp[0]) + "," + std::to_string(tpfp[1]) + ")");
    const std::array<std::pair<int, const char*>, 3> rec{{{1, "0.98"}, {7, "0.86"}, {2, "0.96"}}};
    for (const auto& [fn, want] : rec)
        c.eq(estimate_recall_by_sampling(50, fn).fixed(2), std::string(want), "recall n=50 fn=" + std::to_string(fn));
}

// --- distributions -----------------------------------------------------------

void distributions(checks& c) {
    struct row {
        std::array<std::size_t, 5> counts;
        std::size_t total;
        const char* negative;
        double stated;
        std::size_t participants;
        const char* participation;
    };
    const std::array<row, 3> rows{{{{42, 8309, 2061, 592, 3}, 11007, "75.87", 76.0, 605, "65.55"},
                                   {{520, 100870, 31295, 12021, 139}, 144845, "70.00", 70.0, 796, "86.24"},
                                   {{25, 8588, 2929, 1651, 29}, 13222, "65.14", 65.0, 597, "64.68"}}};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const auto tag = "event " + std::to_string(i + 1);
        const auto d = five_way_distribution(r.counts);
        c.eq(d.total, r.total, tag + " total");
        c.eq(d.collapsed[0].percent, std::string(r.negative), tag + " negative share");
        c.truth(std::abs(std::stod(d.collapsed[0].percent) - r.stated) <= 1.0, tag + " negative share within 1 point");
        const auto p = participation(r.participants, 923);
        c.eq(p.percent, std::string(r.participation), tag + " participation");
        const double exact = 100.0 * static_cast<double>(r.participants) / 923.0;
        c.truth(std::abs(std::stod(p.percent) - exact) <= 0.01, tag + " participation within 0.01");
    }
}

// --- snowball ----------------------------------------------------------------

void snowball_oracle(checks& c) {
    for (std::uint32_t seed = 1; seed <= 25; ++seed) {
        auto g = make_random_graph(seed);
        c.truth(g.store.user_count() <= 200 && g.store.list_count() <= 50, "graph size bound, seed " + std::to_string(seed));
        fixture_backend backend(g.store);
        simulated_clock clock(t0);
        source_gateway gateway(backend, {{"k1"}, {"k2"}}, clock);
        snowball_config cfg;
        cfg.seed_user_ids = g.seeds;
        cfg.label_keywords = g.keywords;
        cfg.max_rounds = 1000;
        cfg.target_size = 100000;
        cfg.on_pending = pending_policy::reject;
        if (!g.location_keys.empty()) cfg.filter = profile_filter{g.location_keys, {}};
        const auto out = snowball_sampler(cfg, gateway, {}).run();
        const auto oracle = bfs_closure(g.store, g.seeds, g.keywords, g.location_keys);
        const auto tag = " seed " + std::to_string(seed);
        c.truth(out.member_ids() == oracle.members, "members differ from closure" + tag);
        std::set<std::string> rejected;
        for (const auto& [id, r] : out.rejected) rejected.insert(id);
        c.truth(rejected == oracle.rejected, "rejected set differs" + tag);

        std::set<std::string> seen(g.seeds);
        for (const auto& r : out.rounds)
            for (const auto& u : r.new_users) c.truth(seen.insert(u).second, "re-added " + u + tag);
        c.truth(seen == out.member_ids(), "round union differs from members" + tag);
    }
}

// --- event filter ------------------------------------------------------------

event_spec make_event(std::set<std::string> seeds, const char* start, const char* end) {
    event_spec e;
    e.name = "ev";
    e.seed_keywords = std::move(seeds);
    e.window = {at(start), at(end)};
    return e;
}

std::set<std::string> id_set(const event_match& m) { return {m.tweet_ids.begin(), m.tweet_ids.end()}; }

void event_filter(checks& c) {
    const auto stop = load_stopwords(data_dir() / "stopwords.txt");

    corpus_store fifty;
    fifty.ingest_jsonl(fixture_dir() / "events50.jsonl", "tweets");
    auto top = make_event({"azadi"}, "2014-08-12", "2014-08-20T23:59:59Z");
    top.expansion.top_k = 5;
    const std::vector<keyword_candidate> expected{
        {"imran", 17}, {"march", 17}, {"islamabad", 13}, {"dharna", 11}, {"pti", 11}};
    c.truth(propose_keywords(fifty, top, keyword_set::from_seeds(top.seed_keywords), stop) == expected,
            "50-tweet fixture top five");

    corpus_store e2e;
    for (const char* k : {"users", "tweets"}) e2e.ingest_jsonl(e2e_dir() / (std::string(k) + ".jsonl"), k);
    const auto e2e_events = load_events(e2e_dir() / "events.json");

    struct corpus_case {
        const corpus_store* store;
        std::vector<event_spec> events;
        std::vector<std::string> pool;
    };
    std::vector<corpus_case> cases{
        {&fifty, {make_event({"azadi"}, "2014-08-01", "2014-08-31")}, {"march", "imran", "pti", "police", "the", "zzz"}},
        {&e2e, e2e_events, {"dharna", "container", "speech", "power", "floodwater", "relief", "the"}}};

    std::mt19937 rng(9);
    for (const auto& cc : cases)
        for (const auto& base : cc.events)
            for (int trial = 0; trial < 40; ++trial) {
                auto e = base;
                if (trial % 2) e.expansion.source = expansion_source::window_only;
                e.expansion.min_count = 1 + static_cast<int>(rng() % 4);
                std::set<std::string> approved;
                for (const auto& w : cc.pool)
                    if (rng() % 3 == 0) approved.insert(w);
                const auto r = expand_and_rematch(*cc.store, e, approved);
                const auto before = id_set(r.seed_only), after = id_set(r.expanded);
                c.truth(std::includes(after.begin(), after.end(), before.begin(), before.end()),
                        "expanded match misses a seed match in " + e.name);
                const auto c1 = propose_keywords(*cc.store, e, r.keywords, stop);
                const auto c2 = propose_keywords(*cc.store, e, r.keywords, stop);
                c.truth(c1 == c2, "candidates not deterministic in " + e.name);
                for (const auto& k : c1) {
                    c.truth(!r.keywords.all().count(k.token), "candidate is a known keyword: " + k.token);
                    c.truth(!stop.count(k.token), "candidate is a stopword: " + k.token);
                }
                for (std::size_t i = 1; i < c1.size(); ++i)
                    c.truth(c1[i - 1].count > c1[i].count ||
                                (c1[i - 1].count == c1[i].count && c1[i - 1].token < c1[i].token),
                            "candidate order breaks ties unstably");
            }
}

// --- normalizer --------------------------------------------------------------

void normalizer(checks& c) {
    const auto cfg = load_normalization_config(data_dir());
    const auto norm = [&](std::string_view s) { return normalize("x", s, cfg).normalized; };

    const auto cases = nlohmann::json::parse(io::read_file(fixture_dir() / "url_regex_cases.json"));
    c.eq(cases.size(), std::size_t{30}, "url case count");
    const boost::regex reference(R"(\b(?:https?://|www\.)\S+\b)");
    for (const auto& k : cases) {
        const std::string in = k[0], want = k[1];
        c.eq(std::regex_replace(in, detail::url_pattern(), ""), want, "url pattern on '" + in + "'");
        c.eq(boost::regex_replace(in, reference, ""), want, "reference engine on '" + in + "'");
    }

    c.eq(default_acronyms().size(), std::size_t{23}, "acronym count");
    for (const auto& [abbr, full] : default_acronyms())
        c.eq(expand_slang("x " + abbr + " y", cfg), "x " + full + " y", "acronym " + abbr);

    c.eq(strip_markup("#PakvInd #BleedGreen tonight"), std::string("PakvInd BleedGreen tonight"), "hashtag unwrap");
    c.eq(strip_markup("score #1"), std::string("score 1"), "numeric hashtag unwrap");

    std::size_t tweets = 0;
    for (const auto& line : io::read_lines(fixture_dir() / "tweets100.jsonl")) {
        if (line.empty()) continue;
        ++tweets;
        const auto j = nlohmann::json::parse(line);
        const auto once = norm(j["text"].get<std::string>());
        c.eq(norm(once), once, "idempotence on " + j["id"].get<std::string>());
    }
    c.eq(tweets, std::size_t{100}, "fixture tweet count");

    std::size_t emoticons = 0;
    for (const auto& line : io::read_lines(data_dir() / "emoticons.tsv")) {
        if (line.empty()) continue;
        ++emoticons;
        const auto emo = line.substr(0, line.find('\t'));
        c.eq(norm(emo), emo, "bare emoticon " + emo);
        const auto out = norm("OMG cars " + emo + " #win @someone");
        c.truth(out.find(emo) != std::string::npos, "emoticon lost in context: " + emo);
    }
    c.truth(emoticons >= 40, "emoticon lexicon unexpectedly small");
}

// --- analyzers ---------------------------------------------------------------

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

template <typename Map>
std::vector<std::string> keys_of(const Map& m) {
    std::vector<std::string> out;
    for (const auto& [k, v] : m) out.push_back(k);
    return out;
}

void analyzers(checks& c) {
    const auto lex = load_lexicons(lexicon_paths::in(data_dir()));
    const auto score = [&](const std::string& s) { return classify_fine("t", s, lex).score; };
    const auto fine = [&](const std::string& s) { return static_cast<int>(classify_fine("t", s, lex).fine_class); };
    const auto polarity = [&](const std::string& s) { return classify_emoticon_first("t", s, lex).profile.polarity; };

    std::vector<std::string> fillers;
    for (std::string f : {"the", "city", "today", "match", "team", "road", "yeh", "kia", "baat", "naya", "container",
                          "march", "hockey", "islamabad"})
        if (!lex.valence.count(f) && !lex.negators.count(f) && !lex.intensifiers.count(f) && !lex.emotions.count(f))
            fillers.push_back(f);
    const auto words = keys_of(lex.valence);
    const auto emos = keys_of(lex.emoticons);
    const auto intens = keys_of(lex.intensifiers);
    const auto feel = keys_of(lex.emotions);
    const std::vector<std::string> negs(lex.negators.begin(), lex.negators.end());
    std::vector<std::string> pos, happy;
    for (const auto& [w, s] : lex.valence)
        if (s > 0) pos.push_back(w);
    for (const auto& [e, v] : lex.emoticons)
        if (v.polarity > 0) happy.push_back(e);
    c.truth(!fillers.empty() && !pos.empty() && happy.size() >= 10, "lexicon pools");
    if (c.failures()) return;

    std::mt19937_64 rng(2024);
    for (int i = 0; i < 300; ++i) {
        std::vector<std::string> toks;
        const int n = std::uniform_int_distribution<int>(0, 12)(rng);
        for (int k = 0; k < n; ++k) toks.push_back(rng() % 5 == 0 ? pick(rng, emos) : rng() % 2 ? pick(rng, words) : pick(rng, fillers));
        const auto s = text::join(toks);
        const auto a = classify_fine("t", s, lex), b = classify_fine("t", s, lex);
        c.truth(a.score == b.score && a.fine_class == b.fine_class, "fine engine nondeterministic: " + s);
        c.truth(classify_emoticon_first("t", s, lex).profile == classify_emoticon_first("t", s, lex).profile,
                "emoticon engine nondeterministic: " + s);
    }

    for (int i = 0; i < 1000; ++i) {
        std::vector<std::string> toks;
        const int lead = std::uniform_int_distribution<int>(0, 2)(rng);
        for (int k = 0; k < lead; ++k) toks.push_back(k == lead - 1 && rng() % 2 ? pick(rng, intens) : pick(rng, fillers));
        toks.push_back(pick(rng, words));
        const int tail = std::uniform_int_distribution<int>(0, 3)(rng);
        for (int k = 0; k < tail; ++k) toks.push_back(pick(rng, fillers));
        const auto base = text::join(toks);
        c.truth(score(pick(rng, negs) + " " + base) == -score(base), "negation does not flip: " + base);
    }

    for (int i = 0; i < 1000; ++i) {
        std::vector<std::string> toks;
        const int n = std::uniform_int_distribution<int>(0, 15)(rng);
        for (int k = 0; k < n; ++k) {
            const int r = static_cast<int>(rng() % 10);
            toks.push_back(r < 4 ? pick(rng, words) : r < 6 ? pick(rng, negs) : r < 7 ? pick(rng, intens) : pick(rng, fillers));
        }
        for (int k = 0; k < 3; ++k) toks.push_back(pick(rng, fillers));
        const auto before = text::join(toks);
        toks.push_back(pick(rng, pos));
        const auto after = text::join(toks);
        c.truth(score(after) >= score(before) && fine(after) >= fine(before), "positive append lowered: " + after);
    }

    for (int i = 0; i < 500; ++i) {
        std::vector<std::string> toks;
        const int n = std::uniform_int_distribution<int>(0, 14)(rng);
        for (int k = 0; k < n; ++k) toks.push_back(rng() % 2 ? pick(rng, feel) : pick(rng, words));
        const int m = 1 + static_cast<int>(rng() % 2);
        for (int k = 0; k < m; ++k) {
            const auto at_pos = toks.empty() ? 0 : rng() % (toks.size() + 1);
            toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(at_pos), pick(rng, happy));
        }
        const auto s = text::join(toks);
        c.eq(polarity(s), 1, "emoticon dominance on '" + s + "'");
    }

    const std::vector<std::string> roman{"yeh", "kia", "baat", "hai", "naya", "pakistan", "zindabad", "shabash",
                                         "jawan", "apni", "fikar", "karni", "chahiye", "hakumat", "liye"};
    for (int i = 0; i < 200; ++i) {
        std::vector<std::string> toks;
        const int n = std::uniform_int_distribution<int>(1, 12)(rng);
        for (int k = 0; k < n; ++k) toks.push_back(pick(rng, roman));
        const auto s = text::join(toks);
        c.truth(classify_fine("t", s, lex).fine_class == sentiment_class::neutral && polarity(s) == 0,
                "roman urdu not neutral: " + s);
    }
}

// --- rate limiter ------------------------------------------------------------

corpus_store timelines(int users, int per_user) {
    corpus_store store;
    for (int u = 0; u < users; ++u) {
        const auto id = "u" + std::to_string(u);
        store.add(user(id));
        for (int i = 0; i < per_user; ++i)
            store.add(post("t" + std::to_string(u) + "_" + std::to_string(i), id, "x", "2014-03-01T00:00:00Z"));
    }
    return store;
}

std::vector<credential> keys(int n) {
    std::vector<credential> out;
    for (int i = 0; i < n; ++i) out.push_back({"key" + std::to_string(i), 15min, 15});
    return out;
}

void rate_limiter(checks& c) {
    const auto store = timelines(30, 450);
    std::vector<std::string> users;
    for (int u = 0; u < 30; ++u) users.push_back("u" + std::to_string(u));

    std::map<int, std::size_t> first_window;
    for (int k : {1, 4}) {
        simulated_clock clock(t0);
        mock_server_options opts;
        opts.enforce_limit = credential{"", 15min, 15};
        mock_source_server server(store, clock, opts);
        server.start();
        http_backend backend(server.base_url());
        source_gateway gw(backend, keys(k), clock);
        const auto results = gw.fetch_timelines(users);
        const auto tag = std::to_string(k) + " credential(s)";
        for (const auto& r : results) c.truth(!r.error && r.tweets.size() == 450, "incomplete timeline with " + tag);

        std::vector<std::pair<std::string, instant>> log;
        std::size_t in_first = 0;
        for (const auto& r : server.requests()) {
            c.truth(r.status == 200, "server refused a request with " + tag);
            log.emplace_back(r.credential, r.at);
            if (r.at < t0 + 15min) ++in_first;
        }
        c.eq(log.size(), std::size_t{90}, "page requests with " + tag);
        for (const auto& [key, n] : max_per_window(log, 15min))
            c.truth(n <= 15, key + " exceeds 15 per window with " + tag);
        first_window[k] = in_first;
    }
    const auto one = static_cast<long>(first_window[1]), four = static_cast<long>(first_window[4]);
    c.truth(std::labs(four - 4 * one) <= 1,
            "throughput " + std::to_string(four) + " vs 4x" + std::to_string(one) + " per window");

    const auto single = timelines(1, 450);
    simulated_clock clock(t0);
    mock_source_server server(single, clock);
    server.start();
    http_backend backend(server.base_url());
    source_gateway gw(backend, keys(1), clock);
    const auto r = gw.fetch_timeline("u0");
    c.eq(r.tweets.size(), std::size_t{450}, "450-tweet timeline size");
    c.eq(server.count_requests("/users/u0/timeline"), std::size_t{3}, "450-tweet timeline page requests");
}

// --- end to end --------------------------------------------------------------

int run_cli(const std::vector<std::string>& args, std::string& out) {
    auto quote = [](const std::string& s) {
        std::string q = "'";
        for (char ch : s) q += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
        return q + "'";
    };
    std::string cmd = quote(EVSENT_PIPELINE_BIN);
    for (const auto& a : args) cmd += " " + quote(a);
    cmd += " --log-level off 2>&1";
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return -1;
    std::array<char, 4096> buf{};
    while (auto n = std::fread(buf.data(), 1, buf.size(), p)) out.append(buf.data(), n);
    const int raw = ::pclose(p);
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

void end_to_end(checks& c) {
    const auto oracle = e2e_oracle();
    std::array<std::string, 2> reports;
    for (auto& report : reports) {
        temp_dir d;
        const auto cfg = write_e2e_config(d).string();
        std::string out;
        c.eq(run_cli({"review", "import", "--file", (e2e_dir() / "decisions_all_accept.jsonl").string(), "-c", cfg}, out),
             0, "import exit status");
        for (const char* stage : {"ingest", "snowball", "fetch", "events", "normalize", "classify", "evaluate", "report"})
            c.eq(run_cli({stage, "-c", cfg}, out), 0, std::string(stage) + " exit status (" + out + ")");
        report = io::read_file(d / "out" / "reports" / "report.json");
    }
    c.truth(!reports[0].empty(), "report.json missing");
    c.truth(reports[0] == reports[1], "report.json differs between runs");
    if (reports[0].empty()) return;

    const auto j = nlohmann::json::parse(reports[0]);
    c.eq(j["community_size"].get<std::size_t>(), oracle["community"].size(), "community size");
    c.eq(j["events"].size(), std::size_t{2}, "event count");
    for (const auto& want : oracle["events"]) {
        const auto name = want["name"].get<std::string>();
        const auto it = std::find_if(j["events"].begin(), j["events"].end(), [&](const auto& e) { return e["name"] == name; });
        if (it == j["events"].end()) {
            c.fail("event missing from report: " + name);
            continue;
        }
        c.eq((*it)["tweets"], want["tweets"], name + " tweets");
        c.eq((*it)["seed_only_tweets"], want["seed_only_tweets"], name + " seed-only tweets");
        c.eq((*it)["participation"]["percent"], want["participation_percent"], name + " participation");
    }
}

} // namespace

int main() {
    const std::vector<criterion> all{
        {"metric arithmetic", 1s, metric_arithmetic},
        {"distribution reproduction", 1s, distributions},
        {"snowball oracle equivalence", 10s, snowball_oracle},
        {"event-filter properties", 0s, event_filter},
        {"normalizer golden corpus", 0s, normalizer},
        {"analyzer properties", 0s, analyzers},
        {"rate limiter", 0s, rate_limiter},
        {"end-to-end fixture", 0s, end_to_end},
    };
    int failed = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto& k = all[i];
        checks c;
        const auto start = std::chrono::steady_clock::now();
        try {
            k.body(c);
        } catch (const std::exception& e) {
            c.fail(std::string("exception: ") + e.what());
        }
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
        if (k.budget.count() && ms > k.budget)
            c.fail("took " + std::to_string(ms.count()) + " ms, budget " + std::to_string(k.budget.count()) + " ms");
        const bool ok = c.failures() == 0;
        failed += !ok;
        std::cout << (ok ? "PASS" : "FAIL") << "  [" << i + 1 << "] " << k.name << "  (" << ms.count() << " ms)";
        if (!ok) {
            std::cout << "  " << c.failures() << " check(s) failed";
            for (const auto& n : c.notes()) std::cout << "\n        " << n;
        }
        std::cout << std::endl;
    }
    std::cout << (all.size() - static_cast<std::size_t>(failed)) << "/" << all.size() << " criteria passed" << std::endl;
    return failed ? 1 : 0;
}
