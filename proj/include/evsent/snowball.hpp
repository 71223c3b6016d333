#pragma once

// Community identification by chain-referral sampling over the user/list
// graph: frontier users -> lists containing them -> label filter -> members
// of accepted lists -> profile filter -> next frontier.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "evsent/corpus.hpp"
#include "evsent/decisions.hpp"
#include "evsent/gateway.hpp"
#include "evsent/text.hpp"

namespace evsent {

enum class verdict { accept, reject, pending };
enum class decision_origin { keyword_auto, human };

inline std::string_view to_string(verdict v) {
    switch (v) {
    case verdict::accept: return "accept";
    case verdict::reject: return "reject";
    case verdict::pending: return "pending";
    }
    return "?";
}

inline std::string_view to_string(decision_origin o) { return o == decision_origin::human ? "human" : "keyword-auto"; }

struct label_decision {
    std::string label;
    verdict decision = verdict::pending;
    decision_origin source = decision_origin::keyword_auto;
};

struct profile_filter {
    std::vector<std::string> location_keywords;
    std::vector<std::string> description_keywords;

    bool empty() const { return location_keywords.empty() && description_keywords.empty(); }
};

// What to do with labels that neither match a keyword nor carry a human
// decision: stop and ask (block), or treat them as rejected (reject).
enum class pending_policy { block, reject };

struct snowball_config {
    std::set<std::string> seed_user_ids;
    std::set<std::string> label_keywords;
    int max_rounds = 3;
    std::size_t target_size = 1000;
    std::optional<profile_filter> filter;
    pending_policy on_pending = pending_policy::block;

    void validate() const {
        if (seed_user_ids.empty()) throw usage_error("snowball: at least one seed user is required");
        if (max_rounds < 1) throw usage_error("snowball: max_rounds must be >= 1");
        if (target_size < 1) throw usage_error("snowball: target_size must be >= 1");
    }
};

struct label_partition {
    std::vector<std::string> accepted;
    std::vector<std::string> rejected;
    std::vector<std::string> pending;
};

inline bool contains_any(const std::string& folded_haystack, const std::set<std::string>& needles) {
    for (const auto& n : needles)
        if (!n.empty() && folded_haystack.find(n) != std::string::npos) return true;
    return false;
}

inline std::set<std::string> folded(const std::set<std::string>& words) {
    std::set<std::string> out;
    for (const auto& w : words) out.insert(text::fold_case(w));
    return out;
}

// Human decisions win; otherwise a case-folded substring hit on any keyword
// accepts; everything else waits for review.
inline label_partition filter_labels(const std::set<std::string>& labels, const std::set<std::string>& keywords,
                                     const decision_log& decisions) {
    const auto keys = folded(keywords);
    label_partition out;
    for (const auto& label : labels) {
        if (auto human = decisions.find(decision_kind::label, label)) {
            (*human == "accept" ? out.accepted : out.rejected).push_back(label);
        } else if (contains_any(text::fold_case(label), keys)) {
            out.accepted.push_back(label);
        } else {
            out.pending.push_back(label);
        }
    }
    return out;
}

inline std::vector<label_decision> label_decisions(const std::set<std::string>& labels,
                                                   const std::set<std::string>& keywords,
                                                   const decision_log& decisions) {
    const auto keys = folded(keywords);
    std::vector<label_decision> out;
    for (const auto& label : labels) {
        if (auto human = decisions.find(decision_kind::label, label))
            out.push_back({label, *human == "accept" ? verdict::accept : verdict::reject, decision_origin::human});
        else if (contains_any(text::fold_case(label), keys))
            out.push_back({label, verdict::accept, decision_origin::keyword_auto});
        else
            out.push_back({label, verdict::pending, decision_origin::keyword_auto});
    }
    return out;
}

struct rejected_member {
    std::string id;
    std::string reason;

    friend bool operator==(const rejected_member&, const rejected_member&) = default;
};

struct member_partition {
    std::vector<user_profile> members;
    std::vector<rejected_member> rejected;
};

inline bool profile_matches(const user_profile& p, const profile_filter& f) {
    auto hit = [](const std::optional<std::string>& field, const std::vector<std::string>& keys) {
        if (!field) return false;
        const auto hay = text::fold_case(*field);
        for (const auto& k : keys)
            if (!k.empty() && hay.find(text::fold_case(k)) != std::string::npos) return true;
        return false;
    };
    return hit(p.location, f.location_keywords) || hit(p.description, f.description_keywords);
}

inline member_partition filter_members(const std::vector<user_profile>& profiles,
                                       const std::optional<profile_filter>& filter, const decision_log& decisions) {
    member_partition out;
    const bool vacuous = !filter || filter->empty();
    for (const auto& p : profiles) {
        if (auto human = decisions.find(decision_kind::profile, p.id)) {
            if (*human == "accept") out.members.push_back(p);
            else out.rejected.push_back({p.id, "human"});
        } else if (vacuous || profile_matches(p, *filter)) {
            out.members.push_back(p);
        } else {
            out.rejected.push_back({p.id, "profile-filter"});
        }
    }
    return out;
}

struct community_member {
    std::string id;
    int via_round = 0;               // 0 for seeds
    std::optional<std::string> via_list;

    friend bool operator==(const community_member&, const community_member&) = default;
};

struct snowball_round {
    int index = 0;
    std::vector<std::string> frontier;
    std::vector<std::string> candidate_lists;
    std::vector<std::string> accepted_lists;
    std::vector<label_decision> labels;
    std::vector<std::string> pending_labels;
    std::map<std::string, std::vector<std::string>> label_lists; // label -> candidate list ids
    std::vector<std::string> new_users;
    std::vector<rejected_member> rejected;
    std::vector<std::string> errors;
    bool blocked = false;
};

struct community_set {
    std::map<std::string, community_member> members;
    std::map<std::string, std::string> rejected; // id -> reason
    std::vector<std::string> frontier;
    std::vector<snowball_round> rounds;
    std::string stop_reason;

    static community_set from_seeds(const std::set<std::string>& seeds) {
        community_set c;
        for (const auto& s : seeds) c.members[s] = community_member{s, 0, std::nullopt};
        c.frontier.assign(seeds.begin(), seeds.end());
        return c;
    }

    std::set<std::string> member_ids() const {
        std::set<std::string> out;
        for (const auto& [id, m] : members) out.insert(id);
        return out;
    }

    // Labels still waiting for a decision in the last round.
    std::vector<std::string> pending_labels() const {
        return rounds.empty() ? std::vector<std::string>{} : rounds.back().pending_labels;
    }
};

inline void to_json(nlohmann::json& j, const community_set& c) {
    auto members = nlohmann::json::array();
    for (const auto& [id, m] : c.members)
        members.push_back({{"id", id},
                           {"via_round", m.via_round},
                           {"via_list", m.via_list ? nlohmann::json(*m.via_list) : nlohmann::json(nullptr)}});
    auto rejected = nlohmann::json::array();
    for (const auto& [id, reason] : c.rejected) rejected.push_back({{"id", id}, {"reason", reason}});
    auto rounds = nlohmann::json::array();
    for (const auto& r : c.rounds) {
        auto labels = nlohmann::json::array();
        for (const auto& l : r.labels)
            labels.push_back({{"label", l.label}, {"verdict", to_string(l.decision)}, {"source", to_string(l.source)}});
        rounds.push_back({{"index", r.index},
                          {"frontier", r.frontier},
                          {"candidate_lists", r.candidate_lists},
                          {"accepted_lists", r.accepted_lists},
                          {"labels", labels},
                          {"new_users", r.new_users},
                          {"blocked", r.blocked},
                          {"errors", r.errors}});
    }
    j = nlohmann::json{{"members", members}, {"rejected", rejected}, {"stop_reason", c.stop_reason}, {"rounds", rounds}};
}

inline community_set community_from_json(const nlohmann::json& j) {
    community_set c;
    for (const auto& m : j.at("members")) {
        community_member cm;
        cm.id = m.at("id").get<std::string>();
        cm.via_round = m.at("via_round").get<int>();
        if (!m.at("via_list").is_null()) cm.via_list = m.at("via_list").get<std::string>();
        c.members[cm.id] = cm;
    }
    for (const auto& r : j.at("rejected")) c.rejected[r.at("id").get<std::string>()] = r.at("reason").get<std::string>();
    c.stop_reason = j.at("stop_reason").get<std::string>();
    return c;
}

class snowball_sampler {
public:
    // The decision log is copied: decisions made after construction apply to
    // the next sampler, not to a run in progress.
    snowball_sampler(snowball_config config, source_gateway& gateway, decision_log decisions)
        : config_(std::move(config)), gateway_(gateway), decisions_(std::move(decisions)) {
        config_.validate();
    }

    // One expansion step from state.frontier. Nothing is committed when the
    // round blocks on pending labels.
    snowball_round run_round(community_set& state) {
        if (state.members.empty()) throw usage_error("snowball: empty community state");
        snowball_round round;
        round.index = static_cast<int>(state.rounds.size());
        round.frontier = state.frontier;
        std::sort(round.frontier.begin(), round.frontier.end());

        std::map<std::string, list_record> candidates;
        for (const auto& user : round.frontier) {
            try {
                for (auto& l : gateway_.fetch_lists_containing(user)) candidates.emplace(l.id, std::move(l));
            } catch (const error& e) {
                spdlog::warn("snowball round {}: lists of {} unavailable: {}", round.index, user, e.what());
                round.errors.push_back(user + ": " + e.what());
            }
        }
        std::set<std::string> labels;
        for (const auto& [id, l] : candidates) {
            round.candidate_lists.push_back(id);
            round.label_lists[l.label].push_back(id);
            labels.insert(l.label);
        }
        round.labels = label_decisions(labels, config_.label_keywords, decisions_);
        std::set<std::string> accepted_labels;
        for (const auto& d : round.labels) {
            if (d.decision == verdict::accept) accepted_labels.insert(d.label);
            if (d.decision == verdict::pending) round.pending_labels.push_back(d.label);
        }
        if (!round.pending_labels.empty() && config_.on_pending == pending_policy::block) {
            round.blocked = true;
            return round;
        }

        // Provenance is the first accepted list (by id) that yields the user.
        std::map<std::string, std::string> via;
        std::map<std::string, user_profile> profiles;
        for (const auto& [id, l] : candidates) {
            if (!accepted_labels.count(l.label)) continue;
            round.accepted_lists.push_back(id);
            std::vector<user_profile> members;
            try {
                members = gateway_.fetch_list_members(id);
            } catch (const error& e) {
                spdlog::warn("snowball round {}: members of list {} unavailable: {}", round.index, id, e.what());
                round.errors.push_back(id + ": " + e.what());
                continue;
            }
            for (auto& p : members) {
                if (state.members.count(p.id) || state.rejected.count(p.id) || via.count(p.id)) continue;
                via[p.id] = id;
                profiles[p.id] = std::move(p);
            }
        }
        std::vector<user_profile> fresh;
        for (auto& [id, p] : profiles) fresh.push_back(std::move(p));
        auto passed = filter_members(fresh, config_.filter, decisions_);

        for (const auto& p : passed.members) {
            round.new_users.push_back(p.id);
            state.members[p.id] = community_member{p.id, round.index + 1, via[p.id]};
        }
        for (const auto& r : passed.rejected) {
            state.rejected[r.id] = r.reason;
            round.rejected.push_back(r);
        }
        state.frontier = round.new_users;
        return round;
    }

    community_set run() {
        auto state = community_set::from_seeds(config_.seed_user_ids);
        for (;;) {
            if (state.members.size() >= config_.target_size) {
                state.stop_reason = "target";
                break;
            }
            if (static_cast<int>(state.rounds.size()) >= config_.max_rounds) {
                state.stop_reason = "max-rounds";
                break;
            }
            auto round = run_round(state);
            const bool blocked = round.blocked;
            const bool empty = round.new_users.empty();
            state.rounds.push_back(std::move(round));
            if (blocked) {
                state.stop_reason = "pending";
                break;
            }
            if (empty) {
                state.stop_reason = "fixed-point";
                break;
            }
        }
        return state;
    }

    const snowball_config& config() const { return config_; }

private:
    snowball_config config_;
    source_gateway& gateway_;
    decision_log decisions_;
};

} // namespace evsent
