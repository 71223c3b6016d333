#pragma once

// Evaluation and descriptive analytics over event matches and verdicts.
// Ratios are kept exact and only rounded when rendered (half-up).

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evsent/decisions.hpp"
#include "evsent/error.hpp"
#include "evsent/event_filter.hpp"
#include "evsent/sentiment.hpp"

namespace evsent {

class ratio {
public:
    ratio() = default;
    ratio(std::int64_t num, std::int64_t den) : num_(num), den_(den) {
        if (den_ == 0) throw undefined_metric_error("ratio with zero denominator");
        if (den_ < 0) {
            num_ = -num_;
            den_ = -den_;
        }
        const auto g = std::gcd(num_ < 0 ? -num_ : num_, den_);
        if (g > 1) {
            num_ /= g;
            den_ /= g;
        }
    }

    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }
    double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }

    ratio scaled(std::int64_t k) const { return ratio(num_ * k, den_); }

    // Decimal rendering, rounded half away from zero.
    std::string fixed(int decimals) const {
        std::int64_t scale = 1;
        for (int i = 0; i < decimals; ++i) scale *= 10;
        const bool neg = num_ < 0;
        const std::int64_t a = neg ? -num_ : num_;
        const std::int64_t q = (2 * a * scale + den_) / (2 * den_);
        std::string out = std::to_string(q / scale);
        if (decimals > 0) {
            std::string frac = std::to_string(q % scale);
            out += "." + std::string(static_cast<std::size_t>(decimals) - frac.size(), '0') + frac;
        }
        return (neg && q != 0 ? "-" : "") + out;
    }

    std::string percent(int decimals = 2) const { return scaled(100).fixed(decimals); }

    friend bool operator==(const ratio& a, const ratio& b) { return a.num_ == b.num_ && a.den_ == b.den_; }

private:
    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

struct confusion_counts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
};

inline ratio precision(const confusion_counts& c) {
    if (c.tp < 0 || c.fp < 0 || c.fn < 0) throw usage_error("confusion counts must be non-negative");
    if (c.tp + c.fp == 0) throw undefined_metric_error("precision undefined: tp + fp = 0");
    return ratio(c.tp, c.tp + c.fp);
}

inline ratio recall(const confusion_counts& c) {
    if (c.tp < 0 || c.fp < 0 || c.fn < 0) throw usage_error("confusion counts must be non-negative");
    if (c.tp + c.fn == 0) throw undefined_metric_error("recall undefined: tp + fn = 0");
    return ratio(c.tp, c.tp + c.fn);
}

// ---------------------------------------------------------------- sampling

enum class sample_kind { relevance, sentiment };

inline std::string_view to_string(sample_kind k) { return k == sample_kind::relevance ? "relevance" : "sentiment"; }

inline sample_kind parse_sample_kind(std::string_view s) {
    if (s == "relevance") return sample_kind::relevance;
    if (s == "sentiment") return sample_kind::sentiment;
    throw validation_error("unknown sample kind '" + std::string(s) + "'");
}

struct sample_item {
    std::string tweet_id;
    std::optional<std::string> label;
};

struct sample_task {
    std::string task_id;
    sample_kind kind = sample_kind::relevance;
    std::string population; // free-form descriptor
    std::vector<sample_item> items;
    std::uint64_t seed = 0;

    bool complete() const {
        return std::all_of(items.begin(), items.end(), [](const sample_item& i) { return i.label.has_value(); });
    }

    std::size_t labeled() const {
        return static_cast<std::size_t>(
            std::count_if(items.begin(), items.end(), [](const sample_item& i) { return i.label.has_value(); }));
    }
};

inline bool label_allowed(sample_kind kind, std::string_view label) {
    if (kind == sample_kind::relevance) return label == "relevant" || label == "irrelevant";
    return label == "Positive" || label == "Negative" || label == "Neutral";
}

// Unbiased integer in [0, n). std distributions are implementation-defined,
// and drawn samples must be identical on every platform for a given seed.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t rem = (max % n + 1) % n;
    std::uint64_t x = rng();
    while (x > max - rem) x = rng();
    return x % n;
}

// min(n, |population|) distinct ids, uniformly without replacement.
inline sample_task draw_sample(const std::vector<std::string>& population, std::size_t n, std::uint64_t seed,
                               std::string task_id = "sample", sample_kind kind = sample_kind::relevance,
                               std::string population_name = {}) {
    if (n < 1) throw usage_error("sample size must be >= 1");
    std::vector<std::string> pool;
    std::set<std::string> seen;
    for (const auto& id : population)
        if (seen.insert(id).second) pool.push_back(id);
    if (pool.empty()) throw usage_error("cannot sample from an empty population");
    std::mt19937_64 rng(seed);
    const std::size_t m = std::min(n, pool.size());
    for (std::size_t i = 0; i < m; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    sample_task t{std::move(task_id), kind, std::move(population_name), {}, seed};
    for (std::size_t i = 0; i < m; ++i) t.items.push_back({pool[i], std::nullopt});
    return t;
}

// Fills unlabeled items from sample decisions in the log.
inline void apply_sample_labels(sample_task& task, const decision_log& decisions) {
    for (auto& item : task.items) {
        if (auto v = decisions.find(decision_kind::sample, sample_key(task.task_id, item.tweet_id)))
            if (label_allowed(task.kind, *v)) item.label = *v;
    }
}

inline void require_complete(const sample_task& task) {
    if (task.items.empty()) throw incomplete_task_error("task " + task.task_id + " has no items");
    for (const auto& i : task.items) {
        if (!i.label) throw incomplete_task_error("task " + task.task_id + ": tweet " + i.tweet_id + " is unlabeled");
        if (!label_allowed(task.kind, *i.label))
            throw incomplete_task_error("task " + task.task_id + ": label '" + *i.label + "' outside the label space");
    }
}

// (n - fn) / n over a sample drawn from tweets the filter did not fetch, where
// fn counts the items a human marked relevant. This is a sample proportion,
// not recall over the full corpus.
inline ratio estimate_recall_by_sampling(const sample_task& task) {
    require_complete(task);
    const auto n = static_cast<std::int64_t>(task.items.size());
    const auto fn = std::count_if(task.items.begin(), task.items.end(),
                                  [](const sample_item& i) { return *i.label == "relevant"; });
    return ratio(n - fn, n);
}

inline ratio estimate_recall_by_sampling(std::int64_t n, std::int64_t fn) {
    if (n < 1 || fn < 0 || fn > n) throw usage_error("recall estimate needs 0 <= fn <= n, n >= 1");
    return ratio(n - fn, n);
}

// Precision of the event filter on a sample of matched tweets.
inline ratio relevance_precision(const sample_task& task) {
    require_complete(task);
    confusion_counts c;
    for (const auto& i : task.items) (*i.label == "relevant" ? c.tp : c.fp)++;
    return precision(c);
}

// Share of sampled tweets whose collapsed verdict equals the human label.
inline ratio analyzer_precision(const sample_task& task, const std::map<std::string, polarity3>& verdicts) {
    require_complete(task);
    std::int64_t hits = 0;
    for (const auto& i : task.items) {
        auto v = verdicts.find(i.tweet_id);
        if (v == verdicts.end()) throw incomplete_task_error("no analyzer verdict for tweet " + i.tweet_id);
        auto human = parse_polarity3(*i.label);
        if (human && *human == v->second) ++hits;
    }
    return ratio(hits, static_cast<std::int64_t>(task.items.size()));
}

inline ratio analyzer_precision(std::int64_t correct, std::int64_t sample_size) {
    return precision({correct, sample_size - correct, 0});
}

// samples.jsonl: one line per item
//   {"task_id","kind":"relevance"|"sentiment","tweet_id","label":null|string,"seed","population"}
inline std::string samples_to_jsonl(const std::vector<sample_task>& tasks) {
    std::string out;
    for (const auto& t : tasks)
        for (const auto& i : t.items) {
            nlohmann::json j{{"task_id", t.task_id},
                             {"kind", to_string(t.kind)},
                             {"tweet_id", i.tweet_id},
                             {"label", i.label ? nlohmann::json(*i.label) : nlohmann::json(nullptr)},
                             {"seed", t.seed},
                             {"population", t.population}};
            out += j.dump() + "\n";
        }
    return out;
}

inline std::vector<sample_task> samples_from_lines(const std::vector<std::string>& lines, const std::string& source) {
    std::vector<sample_task> tasks;
    std::map<std::string, std::size_t> index;
    std::size_t n = 0;
    for (const auto& line : lines) {
        ++n;
        if (text::trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            const auto id = j.at("task_id").get<std::string>();
            auto it = index.find(id);
            if (it == index.end()) {
                sample_task t;
                t.task_id = id;
                t.kind = parse_sample_kind(j.at("kind").get<std::string>());
                t.seed = j.value("seed", std::uint64_t{0});
                t.population = j.value("population", std::string{});
                it = index.emplace(id, tasks.size()).first;
                tasks.push_back(std::move(t));
            }
            auto& task = tasks[it->second];
            sample_item item{j.at("tweet_id").get<std::string>(), std::nullopt};
            if (j.contains("label") && !j["label"].is_null()) {
                auto label = j["label"].get<std::string>();
                if (!label_allowed(task.kind, label))
                    throw validation_error("label '" + label + "' not allowed for " + std::string(to_string(task.kind)));
                item.label = std::move(label);
            }
            task.items.push_back(std::move(item));
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(source, n, e.what());
        } catch (const validation_error& e) {
            throw parse_error(source, n, e.what());
        }
    }
    return tasks;
}

// ----------------------------------------------------------- distributions

struct class_share {
    std::string label;
    std::size_t count = 0;
    std::string percent; // count / total * 100, two decimals
};

struct distribution_report {
    std::size_t total = 0;
    std::vector<class_share> classes;   // five-way (fine) or three-way (emoticon)
    std::vector<class_share> collapsed; // Negative / Neutral / Positive
};

namespace detail {

inline class_share share(std::string label, std::size_t count, std::size_t total) {
    return {std::move(label), count,
            total ? ratio(static_cast<std::int64_t>(count), static_cast<std::int64_t>(total)).percent() : "0.00"};
}

} // namespace detail

inline distribution_report three_way_distribution(const std::array<std::size_t, 3>& counts) {
    distribution_report r;
    r.total = counts[0] + counts[1] + counts[2];
    for (auto p : all_polarities) {
        auto s = detail::share(std::string(to_string(p)), counts[static_cast<std::size_t>(p)], r.total);
        r.classes.push_back(s);
        r.collapsed.push_back(s);
    }
    return r;
}

// Counts in class order VeryNegative..VeryPositive.
inline distribution_report five_way_distribution(const std::array<std::size_t, 5>& counts) {
    distribution_report r;
    for (auto c : counts) r.total += c;
    for (auto c : all_sentiment_classes)
        r.classes.push_back(detail::share(std::string(to_string(c)), counts[static_cast<std::size_t>(c)], r.total));
    const std::array<std::size_t, 3> three{counts[0] + counts[1], counts[2], counts[3] + counts[4]};
    for (auto p : all_polarities)
        r.collapsed.push_back(detail::share(std::string(to_string(p)), three[static_cast<std::size_t>(p)], r.total));
    return r;
}

// Fine verdicts report five classes; emoticon verdicts report polarity.
inline distribution_report sentiment_distribution(const std::vector<sentiment_verdict>& verdicts) {
    const bool fine = verdicts.empty() || verdicts.front().analyzer == analyzer_id::fine;
    if (fine) {
        std::array<std::size_t, 5> counts{};
        for (const auto& v : verdicts) {
            if (v.analyzer != analyzer_id::fine) throw usage_error("mixed analyzers in one distribution");
            ++counts[static_cast<std::size_t>(v.fine_class)];
        }
        return five_way_distribution(counts);
    }
    std::array<std::size_t, 3> counts{};
    for (const auto& v : verdicts) {
        if (v.analyzer != analyzer_id::emoticon) throw usage_error("mixed analyzers in one distribution");
        ++counts[static_cast<std::size_t>(v.collapsed())];
    }
    return three_way_distribution(counts);
}

inline nlohmann::json to_json_value(const distribution_report& r) {
    auto rows = [](const std::vector<class_share>& v) {
        auto a = nlohmann::json::array();
        for (const auto& s : v) a.push_back({{"class", s.label}, {"count", s.count}, {"percent", s.percent}});
        return a;
    };
    return {{"total", r.total}, {"classes", rows(r.classes)}, {"collapsed", rows(r.collapsed)}};
}

// ----------------------------------------------------------- participation

struct participation_report {
    std::size_t participants = 0;
    std::size_t community_size = 0;
    ratio fraction;
    std::string percent;
};

inline participation_report participation(std::size_t participants, std::size_t community_size) {
    if (community_size == 0) throw usage_error("participation needs a non-empty community");
    ratio f(static_cast<std::int64_t>(participants), static_cast<std::int64_t>(community_size));
    return {participants, community_size, f, f.percent()};
}

inline participation_report participation(const event_match& m, std::size_t community_size) {
    return participation(m.participants.size(), community_size);
}

// ---------------------------------------------------------- category clusters

struct category_cluster_report {
    std::size_t users = 0;                 // users with at least one verdict
    std::array<std::size_t, 5> counts{};   // users spanning exactly k+1 classes
    std::array<std::string, 5> percents{}; // two decimals
};

inline category_cluster_report category_clusters(const std::map<std::string, std::vector<sentiment_class>>& by_user) {
    category_cluster_report r;
    for (const auto& [user, classes] : by_user) {
        if (classes.empty()) continue;
        const std::set<sentiment_class> distinct(classes.begin(), classes.end());
        ++r.counts[distinct.size() - 1];
        ++r.users;
    }
    for (std::size_t k = 0; k < 5; ++k)
        r.percents[k] = r.users ? ratio(static_cast<std::int64_t>(r.counts[k]), static_cast<std::int64_t>(r.users)).percent()
                                : "0.00";
    return r;
}

// -------------------------------------------------------- top contributors

struct contributor {
    std::string user_id;
    std::size_t tweets = 0;

    friend bool operator==(const contributor&, const contributor&) = default;
};

inline std::vector<contributor> top_contributors(const std::map<std::string, std::size_t>& per_user, std::size_t k) {
    if (k < 1) throw usage_error("top_contributors needs k >= 1");
    std::vector<contributor> all;
    for (const auto& [u, n] : per_user) all.push_back({u, n});
    std::stable_sort(all.begin(), all.end(), [](const contributor& a, const contributor& b) { return a.tweets > b.tweets; });
    if (all.size() > k) all.resize(k);
    return all;
}

inline std::vector<contributor> top_contributors(const event_match& m, std::size_t k) {
    return top_contributors(m.per_user_counts, k);
}

// ------------------------------------------------------------- agreement

struct disagreement {
    std::string tweet_id;
    polarity3 a;
    polarity3 b;
};

struct agreement_report {
    ratio fraction;
    std::vector<disagreement> disagreements;
};

inline agreement_report analyzer_agreement(const std::map<std::string, polarity3>& a,
                                           const std::map<std::string, polarity3>& b) {
    if (a.size() != b.size()) throw usage_error("analyzer_agreement: verdict sets cover different tweets");
    if (a.empty()) throw undefined_metric_error("analyzer_agreement over zero tweets");
    agreement_report r;
    std::int64_t same = 0;
    for (const auto& [id, pa] : a) {
        auto it = b.find(id);
        if (it == b.end()) throw usage_error("analyzer_agreement: tweet " + id + " missing from second verdict set");
        if (pa == it->second) ++same;
        else r.disagreements.push_back({id, pa, it->second});
    }
    r.fraction = ratio(same, static_cast<std::int64_t>(a.size()));
    return r;
}

inline std::map<std::string, polarity3> collapsed_by_tweet(const std::vector<sentiment_verdict>& verdicts) {
    std::map<std::string, polarity3> out;
    for (const auto& v : verdicts) out[v.tweet_id] = v.collapsed();
    return out;
}

} // namespace evsent
