// pipeline: command-line driver for the event sentiment pipeline.
//
//   pipeline <stage> --config c.json       stage = ingest | snowball | fetch | events |
//                                           normalize | classify | evaluate | report | all
//   pipeline review export --kind k --file p --config c.json
//   pipeline review import --file p [--kind k] --config c.json
//   pipeline serve --config c.json [--port 8080] [--static dir]
//   pipeline mock-server --config c.json [--port 8081]
//
// Exit codes: 0 ok, 1 failure, 2 missing input, 3 decisions pending,
// 4 invalid config or input.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "evsent/mock_server.hpp"
#include "evsent/pipeline.hpp"
#include "evsent/review.hpp"
#include "evsent/review_service.hpp"

using namespace evsent;

namespace {

int run_stages(const std::vector<std::string>& stages, const pipeline_config& cfg, report_format format) {
    run_lock lock(cfg.output_dir);
    for (const auto& s : stages) {
        spdlog::debug("stage {}", s);
        run_stage(s, cfg, format);
    }
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("pipeline"));
    spdlog::set_pattern("%^%l%$ %v");

    CLI::App app{"Event-level sentiment pipeline over a snowball-sampled community"};
    app.require_subcommand(1);
    app.fallthrough(); // inherited: global options may follow the subcommand
    std::string config_path;
    std::string log_level = "info";
    auto with_config = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "pipeline config (JSON)")->required();
        return cmd;
    };
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    std::vector<CLI::App*> stage_cmds;
    for (const auto& s : stage_names()) stage_cmds.push_back(with_config(app.add_subcommand(s, "run the " + s + " stage")));
    auto* all_cmd = with_config(app.add_subcommand("all", "run every stage in order"));

    std::string format = "json";
    for (auto* cmd : {stage_cmds.back(), all_cmd})
        cmd->add_option("--format", format, "report format")->check(CLI::IsMember({"json", "csv"}));

    auto* review_cmd = app.add_subcommand("review", "exchange decisions as JSONL");
    review_cmd->require_subcommand(1);
    std::string review_kind_name, review_file;
    auto* export_cmd = with_config(review_cmd->add_subcommand("export", "write pending items"));
    export_cmd->add_option("--kind", review_kind_name, "labels, profiles, keywords or samples")->required();
    export_cmd->add_option("--file", review_file, "output JSONL")->required();
    auto* import_cmd = with_config(review_cmd->add_subcommand("import", "merge decided items into the decision log"));
    import_cmd->add_option("--kind", review_kind_name, "only accept this kind");
    import_cmd->add_option("--file", review_file, "input JSONL")->required();

    std::string host = "127.0.0.1", static_dir;
    int port = 8080;
    auto* serve_cmd = with_config(app.add_subcommand("serve", "run the review HTTP service"));
    serve_cmd->add_option("--host", host);
    serve_cmd->add_option("--port", port)->check(CLI::Range(1, 65535));
    serve_cmd->add_option("--static", static_dir, "directory with the review UI build");
    int mock_port = 8081;
    auto* mock_cmd = with_config(app.add_subcommand("mock-server", "serve the ingested corpus over the source protocol"));
    mock_cmd->add_option("--host", host);
    mock_cmd->add_option("--port", mock_port)->check(CLI::Range(1, 65535));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_invalid;
    }
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        const auto cfg = load_pipeline_config(config_path);
        const auto fmt = format == "csv" ? report_format::csv : report_format::json;

        for (auto* cmd : stage_cmds)
            if (cmd->parsed()) return run_stages({cmd->get_name()}, cfg, fmt);
        if (all_cmd->parsed()) return run_stages(stage_names(), cfg, fmt);

        if (export_cmd->parsed() || import_cmd->parsed()) {
            std::optional<review_kind> kind;
            if (!review_kind_name.empty()) {
                kind = parse_review_kind(review_kind_name);
                if (!kind) throw validation_error("unknown review kind '" + review_kind_name + "'");
            }
            if (export_cmd->parsed()) {
                const decision_log log(cfg.decisions);
                const auto n = export_review(cfg.output_dir, *kind, log, review_file);
                std::cout << n << " pending " << to_string(*kind) << " item(s) written to " << review_file << "\n";
                return exit_ok;
            }
            if (!fs::exists(review_file)) throw missing_input_error(review_file, "review import");
            run_lock lock(cfg.output_dir);
            decision_log log(cfg.decisions);
            const auto s = import_review(review_file, cfg.output_dir, log, kind);
            std::cout << "imported " << s.merged << ", unchanged " << s.unchanged << ", still pending "
                      << s.still_pending << "\n";
            return exit_ok;
        }

        if (serve_cmd->parsed()) {
            review_service svc(cfg.output_dir, cfg.decisions, {50, static_dir});
            std::cout << "review service on http://" << host << ":" << port << std::endl;
            svc.serve(host, port);
            return exit_ok;
        }

        if (mock_cmd->parsed()) {
            corpus_store store;
            const auto dir = cfg.out(artifact::store);
            if (!fs::exists(dir)) throw missing_input_error(dir, "mock-server");
            store.ingest_directory(dir);
            system_clock_source clock;
            mock_source_server server(store, clock);
            std::cout << "mock source on http://" << host << ":" << mock_port << std::endl;
            server.serve(host, mock_port);
            return exit_ok;
        }
    } catch (const pending_decisions_error& e) {
        std::cout << "pending: " << e.count() << " decision(s); review file " << e.review_file().string() << "\n";
        return exit_pending;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_status_of(e);
    }
    return exit_failure;
}
