#pragma once

// Sliding-window request accounting across one or more API credentials.

#include <chrono>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "evsent/error.hpp"

namespace evsent {

using instant = std::chrono::time_point<std::chrono::system_clock, std::chrono::milliseconds>;

struct credential {
    std::string key_id;
    std::chrono::milliseconds window = std::chrono::minutes(15);
    int budget = 15;
};

struct slot_grant {
    std::string credential_id;
    std::chrono::milliseconds wait{0};
    instant at; // when the request becomes legal
};

// Time source for the gateway. Tests and the offline pipeline use the
// simulated clock, where sleeping advances time instantly.
class clock_source {
public:
    virtual ~clock_source() = default;
    virtual instant now() = 0;
    virtual void sleep_until(instant t) = 0;
};

class system_clock_source final : public clock_source {
public:
    instant now() override { return std::chrono::floor<std::chrono::milliseconds>(std::chrono::system_clock::now()); }
    void sleep_until(instant t) override { std::this_thread::sleep_until(t); }
};

class simulated_clock final : public clock_source {
public:
    explicit simulated_clock(instant start = instant{}) : now_(start) {}

    instant now() override {
        std::lock_guard lock(mu_);
        return now_;
    }

    // Time only moves forward; concurrent sleepers share one timeline.
    void sleep_until(instant t) override {
        std::lock_guard lock(mu_);
        if (t > now_) now_ = t;
    }

    void advance(std::chrono::milliseconds d) {
        std::lock_guard lock(mu_);
        now_ += d;
    }

private:
    std::mutex mu_;
    instant now_;
};

// Invariant: for every credential, any half-open interval [s, s + window)
// contains at most `budget` recorded grants.
class rate_ledger {
public:
    explicit rate_ledger(std::vector<credential> credentials) : credentials_(std::move(credentials)) {
        if (credentials_.empty()) throw usage_error("rate ledger needs at least one credential");
        for (std::size_t i = 0; i < credentials_.size(); ++i) {
            const auto& c = credentials_[i];
            for (std::size_t j = 0; j < i; ++j)
                if (credentials_[j].key_id == c.key_id) throw usage_error("duplicate credential " + c.key_id);
            if (c.budget < 1) throw usage_error("credential " + c.key_id + ": budget must be >= 1");
            if (c.window <= std::chrono::milliseconds::zero())
                throw usage_error("credential " + c.key_id + ": window must be positive");
        }
        recent_.resize(credentials_.size());
    }

    // Picks the credential whose next legal slot is earliest (first configured
    // wins ties) and records the grant at that slot.
    slot_grant acquire_slot(instant now) {
        std::lock_guard lock(mu_);
        auto g = best_slot(now);
        const std::size_t idx = index_of(g.credential_id);
        recent_[idx].push_back(g.at);
        history_.push_back(g);
        return g;
    }

    // Records a grant only when one is legal at `now`.
    std::optional<slot_grant> try_acquire(instant now) {
        std::lock_guard lock(mu_);
        auto g = best_slot(now);
        if (g.wait.count() > 0) return std::nullopt;
        recent_[index_of(g.credential_id)].push_back(g.at);
        history_.push_back(g);
        return g;
    }

    // Same decision as acquire_slot, without recording it.
    slot_grant peek_slot(instant now) const {
        std::lock_guard lock(mu_);
        return best_slot(now);
    }

    const std::vector<credential>& credentials() const { return credentials_; }

    std::vector<slot_grant> history() const {
        std::lock_guard lock(mu_);
        return history_;
    }

private:
    slot_grant best_slot(instant now) const {
        slot_grant best;
        bool have = false;
        for (std::size_t i = 0; i < credentials_.size(); ++i) {
            const instant at = next_legal(i, now);
            if (!have || at < best.at) {
                best = slot_grant{credentials_[i].key_id, at - now, at};
                have = true;
            }
        }
        return best;
    }

    instant next_legal(std::size_t idx, instant now) const {
        auto& q = recent_[idx];
        const auto& c = credentials_[idx];
        while (!q.empty() && q.front() <= now - c.window) q.pop_front();
        instant at = now;
        if (!q.empty() && q.back() > at) at = q.back();
        if (q.size() >= static_cast<std::size_t>(c.budget)) {
            const instant freed = q[q.size() - static_cast<std::size_t>(c.budget)] + c.window;
            if (freed > at) at = freed;
        }
        return at;
    }

    std::size_t index_of(const std::string& id) const {
        for (std::size_t i = 0; i < credentials_.size(); ++i)
            if (credentials_[i].key_id == id) return i;
        throw usage_error("unknown credential " + id);
    }

    std::vector<credential> credentials_;
    mutable std::vector<std::deque<instant>> recent_; // pruned lazily
    std::vector<slot_grant> history_;
    mutable std::mutex mu_;
};

} // namespace evsent
