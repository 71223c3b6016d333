#pragma once

// HTTP review service over one output directory.
//
//   GET  /api/pending?kind=labels|profiles|keywords|samples&page=N
//   POST /api/decision      {"id", "verdict", "version"?}
//   GET  /api/reports/<name>
//
// The decision log on disk is the only state: it is re-read for every request
// and appended to under a mutex, so CLI imports made while the service runs
// are visible immediately.

#include <filesystem>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "evsent/decisions.hpp"
#include "evsent/review.hpp"

namespace evsent {

struct review_service_options {
    std::size_t page_size = 50;
    std::filesystem::path static_dir; // optional UI bundle mounted at /
};

class review_service {
public:
    review_service(std::filesystem::path out_dir, std::filesystem::path decisions, review_service_options options = {})
        : out_dir_(std::move(out_dir)), decisions_(std::move(decisions)), options_(std::move(options)) {
        if (options_.page_size == 0) throw usage_error("page size must be >= 1");
        routes();
    }

    ~review_service() { stop(); }

    review_service(const review_service&) = delete;
    review_service& operator=(const review_service&) = delete;

    int start(const std::string& host = "127.0.0.1", int port = 0) {
        port_ = port ? (server_.bind_to_port(host, port) ? port : -1) : server_.bind_to_any_port(host);
        if (port_ < 0) throw io_error("review service: cannot bind " + host);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    void serve(const std::string& host, int port) {
        if (!server_.listen(host, port))
            throw io_error("review service: cannot listen on " + host + ":" + std::to_string(port));
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    int port() const { return port_; }

private:
    static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void send_error(httplib::Response& res, int status, const std::string& message) {
        send_json(res, status, {{"error", message}});
    }

    void routes() {
        server_.Get("/api/pending", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu_);
            const auto kind = parse_review_kind(req.get_param_value("kind"));
            if (!kind) return send_error(res, 400, "kind must be one of labels, profiles, keywords, samples");
            std::size_t page = 1;
            if (req.has_param("page")) {
                const auto p = req.get_param_value("page");
                if (p.empty() || !text::all_digits(p) || p.size() > 9 || std::stoul(p) < 1)
                    return send_error(res, 400, "page must be a positive integer");
                page = std::stoul(p);
            }
            try {
                const decision_log log(decisions_);
                const auto items = pending_review_items(out_dir_, *kind, log);
                auto out = nlohmann::json::array();
                const auto first = (page - 1) * options_.page_size;
                for (std::size_t i = first; i < items.size() && i < first + options_.page_size; ++i)
                    out.push_back(review_envelope(items[i], log));
                send_json(res, 200,
                          {{"schema_version", 1},
                           {"kind", to_string(*kind)},
                           {"page", page},
                           {"page_size", options_.page_size},
                           {"total", items.size()},
                           {"items", out}});
            } catch (const std::exception& e) {
                send_error(res, 500, e.what());
            }
        });

        server_.Post("/api/decision", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu_);
            nlohmann::json body;
            try {
                body = nlohmann::json::parse(req.body);
            } catch (const nlohmann::json::exception&) {
                return send_error(res, 400, "body is not JSON");
            }
            if (!body.is_object() || !body.contains("id") || !body["id"].is_string() || !body.contains("verdict") ||
                !body["verdict"].is_string())
                return send_error(res, 400, "expected {\"id\": string, \"verdict\": string}");
            std::optional<std::size_t> expected_version;
            if (body.contains("version") && !body["version"].is_null()) {
                if (!body["version"].is_number_unsigned()) return send_error(res, 400, "version must be a non-negative integer");
                expected_version = body["version"].get<std::size_t>();
            }
            try {
                decision_log log(decisions_);
                const auto item = find_item(body["id"].get<std::string>(), log);
                if (!item) return send_error(res, 404, "no review item with id " + body["id"].get<std::string>());
                const auto verdict = body["verdict"].get<std::string>();
                if (std::find(item->allowed.begin(), item->allowed.end(), verdict) == item->allowed.end())
                    return send_error(res, 400, "verdict \"" + verdict + "\" not allowed for this item");
                const auto dk = decision_kind_of(item->kind);
                const auto current = log.find(dk, item->key);
                const auto version = decision_version(log, item->kind, item->key);
                if (current && *current == verdict) return send_json(res, 200, review_envelope(*item, log));
                if (current) {
                    auto env = review_envelope(*item, log);
                    return send_json(res, 409, {{"error", "item already decided"}, {"current", env}});
                }
                if (expected_version && *expected_version != version)
                    return send_json(res, 409, {{"error", "version mismatch"}, {"current", review_envelope(*item, log)}});
                log.append({dk, item->key, verdict, "review-service"});
                send_json(res, 200, review_envelope(*item, log));
            } catch (const std::exception& e) {
                send_error(res, 500, e.what());
            }
        });

        server_.Get(R"(/api/reports/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            static const std::regex safe(R"([A-Za-z0-9_][A-Za-z0-9_.-]*)");
            const std::string name = req.matches[1];
            if (!std::regex_match(name, safe) || name.find("..") != std::string::npos)
                return send_error(res, 404, "no such report");
            auto path = out_dir_ / artifact::reports / name;
            if (!std::filesystem::is_regular_file(path) && path.extension().empty()) path += ".json";
            if (!std::filesystem::is_regular_file(path)) return send_error(res, 404, "no such report: " + name);
            try {
                const auto ext = path.extension().string();
                res.set_content(io::read_file(path), ext == ".csv" ? "text/csv" : "application/json");
                res.status = 200;
            } catch (const std::exception& e) {
                send_error(res, 500, e.what());
            }
        });

        if (!options_.static_dir.empty() && !server_.set_mount_point("/", options_.static_dir.string()))
            throw io_error("review service: cannot mount " + options_.static_dir.string());
    }

    std::optional<review_item> find_item(const std::string& id, const decision_log& log) const {
        const auto dash = id.find('-');
        if (dash == std::string::npos) return std::nullopt;
        const auto dk = parse_decision_kind(id.substr(0, dash));
        if (!dk) return std::nullopt;
        const auto kind = review_kind_of(*dk);
        for (auto& it : collect_review_items(out_dir_, kind, log))
            if (envelope_id(kind, it.key) == id) return it;
        return std::nullopt;
    }

    std::filesystem::path out_dir_;
    std::filesystem::path decisions_;
    review_service_options options_;
    httplib::Server server_;
    std::thread thread_;
    std::mutex mu_;
    int port_ = -1;
};

} // namespace evsent
