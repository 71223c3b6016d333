#pragma once

// Local HTTP server speaking the source wire protocol over a corpus. Used by
// the HTTP backend tests and by `pipeline mock-server`.

#include <chrono>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "evsent/corpus.hpp"
#include "evsent/gateway.hpp"
#include "evsent/rate_ledger.hpp"

namespace evsent {

struct mock_request {
    std::string path;
    std::string credential;
    instant at;
    int status = 200;
};

struct mock_server_options {
    int max_page = 200;
    // When set, requests beyond budget per credential inside a sliding window
    // get 429 with Retry-After.
    std::optional<credential> enforce_limit;
};

class mock_source_server {
public:
    mock_source_server(const corpus_store& store, clock_source& clock, mock_server_options options = {})
        : store_(store), clock_(clock), options_(std::move(options)) {
        routes();
    }

    ~mock_source_server() { stop(); }

    mock_source_server(const mock_source_server&) = delete;
    mock_source_server& operator=(const mock_source_server&) = delete;

    // Binds to an ephemeral port on loopback and serves on a background thread.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        port_ = port ? (server_.bind_to_port(host, port) ? port : -1) : server_.bind_to_any_port(host);
        if (port_ < 0) throw io_error("mock server: cannot bind " + host);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    // Blocks the calling thread.
    void serve(const std::string& host, int port) {
        if (!server_.listen(host, port)) throw io_error("mock server: cannot listen on " + host + ":" + std::to_string(port));
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int port() const { return port_; }

    // The next n requests fail with HTTP 500.
    void fail_next(int n) {
        std::lock_guard lock(mu_);
        fail_next_ = n;
    }

    std::vector<mock_request> requests() const {
        std::lock_guard lock(mu_);
        return log_;
    }

    std::size_t count_requests(const std::string& path_prefix) const {
        std::lock_guard lock(mu_);
        std::size_t n = 0;
        for (const auto& r : log_)
            if (r.path.rfind(path_prefix, 0) == 0) ++n;
        return n;
    }

private:
    // Returns true when the request may proceed; otherwise fills res.
    bool admit(const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mu_);
        mock_request entry{req.path, req.get_header_value("X-Credential"), clock_.now(), 200};
        if (fail_next_ > 0) {
            --fail_next_;
            entry.status = 500;
            log_.push_back(entry);
            res.status = 500;
            res.set_content(R"({"error":"injected failure"})", "application/json");
            return false;
        }
        if (options_.enforce_limit) {
            const auto& lim = *options_.enforce_limit;
            auto& q = seen_[entry.credential];
            while (!q.empty() && q.front() <= entry.at - lim.window) q.pop_front();
            if (q.size() >= static_cast<std::size_t>(lim.budget)) {
                const auto retry = q.front() + lim.window - entry.at;
                const auto secs = std::chrono::ceil<std::chrono::seconds>(retry).count();
                entry.status = 429;
                log_.push_back(entry);
                res.status = 429;
                res.set_header("Retry-After", std::to_string(std::max<long long>(secs, 1)));
                res.set_content(R"({"error":"rate limited"})", "application/json");
                return false;
            }
            q.push_back(entry.at);
        }
        log_.push_back(entry);
        return true;
    }

    void routes() {
        server_.Get("/lists", [this](const httplib::Request& req, httplib::Response& res) {
            if (!admit(req, res)) return;
            if (!req.has_param("member")) return bad_request(res, "missing member parameter");
            nlohmann::json body{{"lists", store_.lists_containing(req.get_param_value("member"))}};
            res.set_content(body.dump(), "application/json");
        });
        server_.Get(R"(/lists/([^/]+)/members)", [this](const httplib::Request& req, httplib::Response& res) {
            if (!admit(req, res)) return;
            const auto* list = store_.find_list(req.matches[1].str());
            if (!list) {
                res.status = 404;
                res.set_content(R"({"error":"no such list"})", "application/json");
                return;
            }
            nlohmann::json body{{"members", detail::members_of(store_, *list)}};
            res.set_content(body.dump(), "application/json");
        });
        server_.Get(R"(/users/([^/]+)/timeline)", [this](const httplib::Request& req, httplib::Response& res) {
            if (!admit(req, res)) return;
            const std::string user = req.matches[1].str();
            if (const auto* u = store_.find_user(user); u && u->is_protected) {
                res.status = 403;
                res.set_content(R"({"error":"protected"})", "application/json");
                return;
            }
            int count = options_.max_page;
            if (req.has_param("count")) {
                const auto c = req.get_param_value("count");
                if (!text::all_digits(c)) return bad_request(res, "bad count");
                count = std::min(std::stoi(c), options_.max_page);
            }
            std::optional<std::string> cursor;
            if (req.has_param("cursor") && !req.get_param_value("cursor").empty()) cursor = req.get_param_value("cursor");
            try {
                res.set_content(nlohmann::json(detail::page_of(store_.tweets_by_user(user), cursor, count)).dump(),
                                "application/json");
            } catch (const usage_error& e) {
                bad_request(res, e.what());
            }
        });
    }

    static void bad_request(httplib::Response& res, const std::string& msg) {
        res.status = 400;
        res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
    }

    const corpus_store& store_;
    clock_source& clock_;
    mock_server_options options_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = -1;
    mutable std::mutex mu_;
    std::vector<mock_request> log_;
    std::map<std::string, std::deque<instant>> seen_;
    int fail_next_ = 0;
};

} // namespace evsent
