#include <gtest/gtest.h>

#include <fstream>

#include "e2e_support.hpp"
#include "evsent/pipeline.hpp"
#include "evsent/review.hpp"

using namespace evsent;
using namespace evtest;

namespace {

struct e2e_run {
    temp_dir dir;
    pipeline_config cfg;

    e2e_run() : cfg(load_pipeline_config(write_e2e_config(dir))) {}
    template <typename Edit>
    explicit e2e_run(Edit&& edit) : cfg(load_pipeline_config(write_e2e_config(dir, edit))) {}

    void through(const std::string& last) {
        for (const auto& s : stage_names()) {
            run_stage(s, cfg);
            if (s == last) return;
        }
    }
    void all() { through("report"); }
    nlohmann::json json(const std::string& rel) const { return nlohmann::json::parse(io::read_file(cfg.out(rel))); }
};

std::set<std::string> member_ids(const nlohmann::json& community) {
    std::set<std::string> out;
    for (const auto& m : community["members"]) out.insert(m["id"].get<std::string>());
    return out;
}

std::set<std::string> as_set(const nlohmann::json& a) { return a.get<std::set<std::string>>(); }

std::map<std::string, std::string> artifact_bytes(const fs::path& out) {
    std::map<std::string, std::string> m;
    for (const auto& e : fs::recursive_directory_iterator(out))
        if (e.is_regular_file() && e.path().filename() != "decisions.jsonl")
            m[fs::relative(e.path(), out).string()] = io::read_file(e.path());
    return m;
}

std::vector<decision_record> log_records(const pipeline_config& c) { return decision_log(c.decisions).records(); }

} // namespace

// ---------------------------------------------------------------- config

TEST(PipelineConfig, LoadsBundledConfig) {
    temp_dir d;
    const auto c = load_pipeline_config(write_e2e_config(d));
    EXPECT_EQ(c.seed, 2014u);
    EXPECT_EQ(c.output_dir, d.path() / "out");
    EXPECT_EQ(c.decisions, d.path() / "out" / "decisions.jsonl");
    EXPECT_EQ(c.credentials.size(), 1u);
    EXPECT_EQ(c.credentials[0].budget, 15);
    EXPECT_EQ(c.credentials[0].window, std::chrono::minutes(15));
    EXPECT_EQ(c.snowball.seed_user_ids, (std::set<std::string>{"u01", "u02"}));
    ASSERT_TRUE(c.snowball.filter);
    EXPECT_EQ(c.snowball.on_pending, pending_policy::block);
    EXPECT_EQ(c.lexicons.valence, data_dir() / "valence.tsv");
    EXPECT_EQ(c.evaluation.precision_sample, 30u);
}

TEST(PipelineConfig, RelativePathsResolveAgainstConfigFile) {
    const auto c = load_pipeline_config(e2e_dir() / "config.json");
    EXPECT_EQ(c.users, e2e_dir() / "users.jsonl");
    EXPECT_EQ(fs::weakly_canonical(c.acronyms), fs::weakly_canonical(data_dir() / "acronyms.tsv"));
}

TEST(PipelineConfig, MandatoryKeys) {
    for (const char* key : {"seed", "output_dir", "corpus", "gateway", "snowball", "events", "normalization", "lexicons"}) {
        temp_dir d;
        const auto p = write_e2e_config(d, [&](nlohmann::json& j) { j.erase(key); });
        try {
            load_pipeline_config(p);
            ADD_FAILURE() << "accepted config without " << key;
        } catch (const validation_error& e) {
            EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
        }
    }
}

TEST(PipelineConfig, ReferencedPathsMustExist) {
    temp_dir d;
    EXPECT_THROW(load_pipeline_config(write_e2e_config(d, [](nlohmann::json& j) { j["corpus"]["tweets"] = "/nope.jsonl"; })),
                 validation_error);
    EXPECT_THROW(load_pipeline_config(write_e2e_config(d, [](nlohmann::json& j) { j["lexicons"] = "/nope"; })),
                 validation_error);
    EXPECT_THROW(load_pipeline_config(write_e2e_config(d, [](nlohmann::json& j) { j["stopwords"] = "/nope.txt"; })),
                 validation_error);
}

TEST(PipelineConfig, BadValues) {
    temp_dir d;
    auto bad = [&](auto edit) { return load_pipeline_config(write_e2e_config(d, edit)); };
    EXPECT_THROW(bad([](nlohmann::json& j) { j["snowball"]["on_pending"] = "later"; }), validation_error);
    EXPECT_THROW(bad([](nlohmann::json& j) { j["gateway"]["backend"] = "ftp"; }), validation_error);
    EXPECT_THROW(bad([](nlohmann::json& j) { j["gateway"]["credentials"] = nlohmann::json::array(); }), validation_error);
    EXPECT_THROW(bad([](nlohmann::json& j) { j["gateway"]["clock_start"] = "yesterday"; }), validation_error);
    EXPECT_THROW(bad([](nlohmann::json& j) { j["seed"] = "abc"; }), validation_error);
    EXPECT_THROW(bad([](nlohmann::json& j) { j["snowball"]["seed_user_ids"] = nlohmann::json::array(); }),
                 validation_error);
    EXPECT_THROW(bad([](nlohmann::json& j) { j["evaluation"]["precision_sample"] = 0; }), validation_error);
    auto p = d.write("broken.json", "{ not json");
    EXPECT_THROW(load_pipeline_config(p), parse_error);
}

TEST(ExitStatus, ErrorMapping) {
    EXPECT_EQ(exit_status_of(missing_input_error("x", "s")), exit_missing_input);
    EXPECT_EQ(exit_status_of(pending_decisions_error("x", 1)), exit_pending);
    EXPECT_EQ(exit_status_of(validation_error("x")), exit_invalid);
    EXPECT_EQ(exit_status_of(parse_error("f", 1, "x")), exit_invalid);
    EXPECT_EQ(exit_status_of(io_error("x")), exit_failure);
    EXPECT_EQ(exit_status_of(lock_error("x")), exit_failure);
}

// ---------------------------------------------------------------- stages

TEST(Stages, MissingPrerequisiteNamesInput) {
    e2e_run r;
    for (const auto& s : stage_names()) {
        if (s == "ingest") continue;
        try {
            run_stage(s, r.cfg);
            ADD_FAILURE() << s << " ran without inputs";
        } catch (const missing_input_error& e) {
            EXPECT_TRUE(e.path().string().rfind(r.cfg.output_dir.string(), 0) == 0) << e.path();
            EXPECT_NE(std::string(e.what()).find(s), std::string::npos);
        }
    }
    EXPECT_THROW(run_stage("dance", r.cfg), usage_error);
}

TEST(Stages, IngestWritesManifest) {
    e2e_run r;
    run_stage("ingest", r.cfg);
    const auto m = r.json(artifact::manifest);
    EXPECT_EQ(m["seed"], 2014);
    EXPECT_EQ(m["stored"]["users"], 20);
    EXPECT_EQ(m["stored"]["lists"], 8);
    EXPECT_EQ(m["stored"]["tweets"], 300);
    EXPECT_TRUE(fs::exists(r.cfg.out("store/tweets.jsonl")));
}

TEST(Stages, SnowballBlocksOnUnknownLabels) {
    e2e_run r;
    run_stage("ingest", r.cfg);
    try {
        run_stage("snowball", r.cfg);
        FAIL() << "expected pending decisions";
    } catch (const pending_decisions_error& e) {
        EXPECT_EQ(e.review_file(), r.cfg.out(artifact::labels_pending));
        EXPECT_EQ(e.count(), e2e_oracle()["first_pending_labels"].size());
    }
    std::set<std::string> labels;
    const auto pending_file = r.json(artifact::labels_pending);
    for (const auto& it : pending_file["items"]) labels.insert(it["label"].get<std::string>());
    EXPECT_EQ(labels, as_set(e2e_oracle()["first_pending_labels"]));
    EXPECT_FALSE(fs::exists(r.cfg.out(artifact::community)));
    EXPECT_THROW(run_stage("fetch", r.cfg), missing_input_error);
}

TEST(Stages, RejectPolicyNeverBlocks) {
    e2e_run r([](nlohmann::json& j) { j["snowball"]["on_pending"] = "reject"; });
    r.through("snowball");
    EXPECT_FALSE(fs::exists(r.cfg.out(artifact::labels_pending)));
    const auto members = member_ids(r.json(artifact::community));
    EXPECT_TRUE(members.count("u01"));
    EXPECT_FALSE(members.count("u06")) << "reached only through a pending label";
}

TEST(Stages, EventsBlockOnKeywordCandidates) {
    e2e_run r;
    run_stage("ingest", r.cfg);
    {
        decision_log log(r.cfg.decisions);
        for (const auto& d : decision_log::parse_file(e2e_dir() / "decisions_all_accept.jsonl"))
            if (d.kind == decision_kind::label) log.append(d);
    }
    run_stage("snowball", r.cfg);
    run_stage("fetch", r.cfg);
    EXPECT_THROW(run_stage("events", r.cfg), pending_decisions_error);
    std::set<std::string> pending, expected;
    const auto pending_file = r.json(artifact::keywords_pending);
    for (const auto& it : pending_file["items"]) {
        pending.insert(keyword_key(it["event"].get<std::string>(), it["token"].get<std::string>()));
        EXPECT_FALSE(it["examples"].empty());
    }
    const auto oracle = e2e_oracle();
    for (const auto& e : oracle["events"])
        for (const auto& c : e["candidates"]) expected.insert(keyword_key(e["name"].get<std::string>(), c["token"].get<std::string>()));
    EXPECT_EQ(pending, expected);
    EXPECT_FALSE(fs::exists(r.cfg.out(artifact::matches)));
}

TEST(EndToEnd, MatchesOracle) {
    e2e_run r;
    run_stage("ingest", r.cfg);
    import_all_accept(r.cfg);
    r.all();
    const auto oracle = e2e_oracle();

    const auto community = r.json(artifact::community);
    EXPECT_EQ(member_ids(community), as_set(oracle["community"]));
    std::set<std::string> rejected;
    for (const auto& x : community["rejected"]) rejected.insert(x["id"].get<std::string>());
    EXPECT_EQ(rejected, as_set(oracle["rejected"]));
    EXPECT_EQ(as_set(r.json(artifact::fetch)["access_denied"]), as_set(oracle["access_denied"]));

    std::map<std::string, std::string> normalized;
    for (const auto& line : io::read_lines(r.cfg.out(artifact::normalized))) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        normalized[j["tweet_id"]] = j["normalized"];
    }
    EXPECT_EQ(nlohmann::json(normalized), oracle["normalized"]);

    const auto matches = r.json(artifact::matches)["events"];
    const auto report = r.json("reports/report.json");
    EXPECT_EQ(report["community_size"], oracle["community"].size());
    ASSERT_EQ(report["events"].size(), oracle["events"].size());
    for (std::size_t i = 0; i < oracle["events"].size(); ++i) {
        const auto& o = oracle["events"][i];
        const auto& m = matches[i];
        const auto& e = report["events"][i];
        SCOPED_TRACE(o["name"].get<std::string>());
        EXPECT_EQ(m["match"]["tweet_ids"], o["tweet_ids"]);
        std::set<std::string> cands;
        for (const auto& c : o["candidates"]) cands.insert(c["token"].get<std::string>());
        EXPECT_EQ(as_set(m["approved_keywords"]), cands);
        EXPECT_EQ(e["tweets"], o["tweets"]);
        EXPECT_EQ(e["seed_only_tweets"], o["seed_only_tweets"]);
        EXPECT_EQ(e["participation"]["participants"], o["participants"]);
        EXPECT_EQ(e["participation"]["percent"], o["participation_percent"]);
        for (const auto& row : e["distribution"]["fine"]["classes"])
            EXPECT_EQ(row["count"], o["fine_counts"][row["class"].get<std::string>()]) << row;
        for (const auto& row : e["distribution"]["fine"]["collapsed"])
            EXPECT_EQ(row["percent"], o["fine_collapsed_percent"][row["class"].get<std::string>()]) << row;
        for (const auto& row : e["distribution"]["emoticon"]["classes"])
            EXPECT_EQ(row["count"], o["emoticon_counts"][row["class"].get<std::string>()]) << row;
        ASSERT_EQ(e["top_contributors"].size(), o["top_contributors"].size());
        for (std::size_t k = 0; k < o["top_contributors"].size(); ++k) {
            EXPECT_EQ(e["top_contributors"][k]["user_id"], o["top_contributors"][k]["user_id"]);
            EXPECT_EQ(e["top_contributors"][k]["tweets"], o["top_contributors"][k]["tweets"]);
        }
        EXPECT_TRUE(e["evaluation"]["relevance_precision"]["value"].is_null());
    }
}

TEST(EndToEnd, SeedRecordedInJsonArtifacts) {
    e2e_run r;
    run_stage("ingest", r.cfg);
    import_all_accept(r.cfg);
    r.all();
    for (const char* a : {artifact::manifest, artifact::community, artifact::fetch, artifact::matches, artifact::evaluation})
        EXPECT_EQ(r.json(a)["seed"], 2014) << a;
    EXPECT_EQ(r.json("reports/report.json")["seed"], 2014);
    for (const auto& line : io::read_lines(r.cfg.out(artifact::samples))) {
        if (line.empty()) continue;
        EXPECT_TRUE(nlohmann::json::parse(line).contains("seed"));
    }
}

TEST(EndToEnd, StagesAreIdempotent) {
    e2e_run r;
    run_stage("ingest", r.cfg);
    import_all_accept(r.cfg);
    r.all();
    const auto before = artifact_bytes(r.cfg.output_dir);
    for (const auto& s : stage_names()) {
        run_stage(s, r.cfg);
        EXPECT_EQ(artifact_bytes(r.cfg.output_dir), before) << "after re-running " << s;
    }
}

TEST(EndToEnd, TwoRunsProduceIdenticalReports) {
    e2e_run a, b;
    for (auto* r : {&a, &b}) {
        run_stage("ingest", r->cfg);
        import_all_accept(r->cfg);
        r->all();
    }
    EXPECT_EQ(io::read_file(a.cfg.out("reports/report.json")), io::read_file(b.cfg.out("reports/report.json")));
    EXPECT_EQ(io::read_file(a.cfg.out(artifact::samples)), io::read_file(b.cfg.out(artifact::samples)));
}

TEST(EndToEnd, DifferentSeedChangesSamplesOnly) {
    e2e_run a, b([](nlohmann::json& j) { j["seed"] = 7; });
    for (auto* r : {&a, &b}) {
        run_stage("ingest", r->cfg);
        import_all_accept(r->cfg);
        r->all();
    }
    EXPECT_NE(io::read_file(a.cfg.out(artifact::samples)), io::read_file(b.cfg.out(artifact::samples)));
    EXPECT_EQ(a.json(artifact::matches)["events"], b.json(artifact::matches)["events"]);
}

TEST(EndToEnd, CsvReport) {
    e2e_run r;
    run_stage("ingest", r.cfg);
    import_all_accept(r.cfg);
    r.through("evaluate");
    stage_report(r.cfg, report_format::csv);
    const auto part = io::read_lines(r.cfg.out("reports/participation.csv"));
    ASSERT_GE(part.size(), 3u);
    EXPECT_EQ(part[0], "event,tweets,participants,community_size,percent");
    const auto oracle = e2e_oracle();
    EXPECT_EQ(part[1], "Azadi March," + std::to_string(oracle["events"][0]["tweets"].get<int>()) + "," +
                           std::to_string(oracle["events"][0]["participants"].get<int>()) + ",17," +
                           oracle["events"][0]["participation_percent"].get<std::string>());
    const auto dist = io::read_lines(r.cfg.out("reports/distribution.csv"));
    EXPECT_EQ(dist.size(), 1u + 2 * (5 + 3) + (dist.back().empty() ? 1 : 0));
    EXPECT_TRUE(fs::exists(r.cfg.out("reports/relevance.csv")));
    EXPECT_TRUE(fs::exists(r.cfg.out("reports/analyzer_precision.csv")));
}

// ------------------------------------------------------------------ lock

TEST(RunLock, ExclusivePerDirectory) {
    temp_dir d;
    {
        run_lock a(d.path());
        EXPECT_TRUE(fs::exists(d / ".pipeline.lock"));
        EXPECT_THROW(run_lock b(d.path()), lock_error);
    }
    EXPECT_FALSE(fs::exists(d / ".pipeline.lock"));
    run_lock again(d.path());
}

TEST(RunLock, StaleLockTakenOver) {
    temp_dir d;
    const pid_t child = ::fork();
    if (child == 0) ::_exit(0);
    int status = 0;
    ::waitpid(child, &status, 0);
    d.write(".pipeline.lock", std::to_string(child) + "\n");
    EXPECT_NO_THROW(run_lock l(d.path()));
    d.write(".pipeline.lock", "garbage");
    EXPECT_NO_THROW(run_lock l(d.path()));
}

// ---------------------------------------------------------------- review files

TEST(ReviewFiles, NothingPendingExportsZero) {
    e2e_run r;
    const auto f = r.dir / "labels.jsonl";
    EXPECT_EQ(export_review(r.cfg.output_dir, review_kind::labels, decision_log(r.cfg.decisions), f), 0u);
    EXPECT_TRUE(fs::exists(f));
    EXPECT_EQ(io::read_file(f), "");
}

TEST(ReviewFiles, UnmodifiedRoundTripStaysBlocked) {
    e2e_run r;
    run_stage("ingest", r.cfg);
    EXPECT_THROW(run_stage("snowball", r.cfg), pending_decisions_error);
    const auto f = r.dir / "labels.jsonl";
    const auto n = export_review(r.cfg.output_dir, review_kind::labels, decision_log(r.cfg.decisions), f);
    EXPECT_EQ(n, 2u);
    for (const auto& line : io::read_lines(f)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j["verdict"], "pending");
        EXPECT_EQ(j["kind"], "label");
        EXPECT_FALSE(j["context"]["lists"].empty());
    }
    decision_log log(r.cfg.decisions);
    const auto s = import_review(f, r.cfg.output_dir, log);
    EXPECT_EQ(s.merged, 0u);
    EXPECT_EQ(s.still_pending, 2u);
    EXPECT_THROW(run_stage("snowball", r.cfg), pending_decisions_error);
}

TEST(ReviewFiles, AcceptingExportUnblocksSnowball) {
    e2e_run r;
    run_stage("ingest", r.cfg);
    EXPECT_THROW(run_stage("snowball", r.cfg), pending_decisions_error);
    // accept whatever is pending, round after round
    for (int i = 0; i < 10; ++i) {
        const auto f = r.dir / "labels.jsonl";
        if (!export_review(r.cfg.output_dir, review_kind::labels, decision_log(r.cfg.decisions), f)) break;
        std::string edited;
        for (const auto& line : io::read_lines(f)) {
            if (line.empty()) continue;
            auto j = nlohmann::json::parse(line);
            j["verdict"] = "accept";
            edited += j.dump() + "\n";
        }
        io::write_file_atomic(f, edited);
        decision_log log(r.cfg.decisions);
        import_review(f, r.cfg.output_dir, log, review_kind::labels);
        try {
            run_stage("snowball", r.cfg);
        } catch (const pending_decisions_error&) {
        }
    }
    EXPECT_EQ(member_ids(r.json(artifact::community)), as_set(e2e_oracle()["community"]));
}

TEST(ReviewFiles, InvalidVerdictNothingMerged) {
    e2e_run r;
    const auto f = r.dir.write("in.jsonl",
                               "{\"kind\":\"label\",\"key\":\"Media Watch\",\"verdict\":\"accept\"}\n"
                               "{\"kind\":\"label\",\"key\":\"Press club\",\"verdict\":\"maybe\"}\n");
    decision_log log(r.cfg.decisions);
    try {
        import_review(f, r.cfg.output_dir, log);
        FAIL();
    } catch (const validation_error& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("line 2"), std::string::npos) << what;
        EXPECT_NE(what.find("maybe"), std::string::npos) << what;
        EXPECT_EQ(what.find("line 1"), std::string::npos) << what;
    }
    EXPECT_TRUE(log_records(r.cfg).empty());
    EXPECT_FALSE(fs::exists(r.cfg.decisions));
}

TEST(ReviewFiles, UnknownFieldsAndKindsRejected) {
    e2e_run r;
    decision_log log(r.cfg.decisions);
    auto f = r.dir.write("a.jsonl", "{\"kind\":\"label\",\"key\":\"x\",\"verdict\":\"accept\",\"colour\":1}\n");
    EXPECT_THROW(import_review(f, r.cfg.output_dir, log), validation_error);
    f = r.dir.write("b.jsonl", "{\"kind\":\"mood\",\"key\":\"x\",\"verdict\":\"accept\"}\n");
    EXPECT_THROW(import_review(f, r.cfg.output_dir, log), validation_error);
    f = r.dir.write("c.jsonl", "not json\n");
    EXPECT_THROW(import_review(f, r.cfg.output_dir, log), validation_error);
    f = r.dir.write("d.jsonl", "{\"kind\":\"keyword\",\"key\":\"E|x\",\"verdict\":\"accept\"}\n");
    EXPECT_THROW(import_review(f, r.cfg.output_dir, log, review_kind::labels), validation_error);
    EXPECT_TRUE(log.records().empty());
}

TEST(ReviewFiles, RepeatImportIsNoOp) {
    e2e_run r;
    decision_log log(r.cfg.decisions);
    const auto f = r.dir.write("in.jsonl", "{\"kind\":\"label\",\"key\":\"Media Watch\",\"verdict\":\"accept\"}\n");
    EXPECT_EQ(import_review(f, r.cfg.output_dir, log).merged, 1u);
    const auto s = import_review(f, r.cfg.output_dir, log);
    EXPECT_EQ(s.merged, 0u);
    EXPECT_EQ(s.unchanged, 1u);
    EXPECT_EQ(log_records(r.cfg).size(), 1u);
}

TEST(ReviewFiles, ProfileDecisionOverridesFilter) {
    e2e_run r;
    run_stage("ingest", r.cfg);
    import_all_accept(r.cfg);
    run_stage("snowball", r.cfg);
    const auto f = r.dir / "profiles.jsonl";
    ASSERT_EQ(export_review(r.cfg.output_dir, review_kind::profiles, decision_log(r.cfg.decisions), f), 1u);
    const auto item = nlohmann::json::parse(io::read_lines(f).front());
    EXPECT_EQ(item["key"], "u17");
    EXPECT_EQ(item["context"]["profile"]["location"], "London");
    auto j = item;
    j["verdict"] = "accept";
    const auto in = r.dir.write("in.jsonl", j.dump() + "\n");
    decision_log log(r.cfg.decisions);
    import_review(in, r.cfg.output_dir, log);
    run_stage("snowball", r.cfg);
    auto expected = as_set(e2e_oracle()["community"]);
    expected.insert("u17");
    EXPECT_EQ(member_ids(r.json(artifact::community)), expected);
}

TEST(ReviewFiles, SampleLabelsDriveMetrics) {
    e2e_run r;
    run_stage("ingest", r.cfg);
    import_all_accept(r.cfg);
    r.all();
    const auto tasks = samples_from_lines(io::read_lines(r.cfg.out(artifact::samples)), "samples");
    const sample_task* precision_task = nullptr;
    const sample_task* sentiment_task = nullptr;
    for (const auto& t : tasks) {
        if (t.task_id == "Azadi March/precision") precision_task = &t;
        if (t.task_id == "Azadi March/sentiment") sentiment_task = &t;
    }
    ASSERT_TRUE(precision_task && sentiment_task);
    ASSERT_EQ(precision_task->items.size(), 30u);

    std::map<std::string, std::string> fine;
    for (const auto& line : io::read_lines(r.cfg.out(artifact::verdicts))) {
        if (line.empty()) continue;
        const auto v = verdict_from_json(nlohmann::json::parse(line));
        if (v.analyzer == analyzer_id::fine) fine[v.tweet_id] = std::string(to_string(v.collapsed()));
    }
    std::string body;
    for (std::size_t i = 0; i < precision_task->items.size(); ++i)
        body += nlohmann::json{{"kind", "sample"},
                               {"key", sample_key(precision_task->task_id, precision_task->items[i].tweet_id)},
                               {"verdict", i < 27 ? "relevant" : "irrelevant"}}
                    .dump() +
                "\n";
    for (const auto& it : sentiment_task->items)
        body += nlohmann::json{{"kind", "sample"},
                               {"key", sample_key(sentiment_task->task_id, it.tweet_id)},
                               {"verdict", fine.at(it.tweet_id)}}
                    .dump() +
                "\n";
    decision_log log(r.cfg.decisions);
    import_review(r.dir.write("labels.jsonl", body), r.cfg.output_dir, log);
    run_stage("evaluate", r.cfg);
    run_stage("report", r.cfg);
    const auto ev = r.json("reports/report.json")["events"][0]["evaluation"];
    EXPECT_EQ(ev["relevance_precision"]["value"], "0.90");
    EXPECT_EQ(ev["relevance_precision"]["exact"], "9/10");
    EXPECT_EQ(ev["analyzer_precision"]["fine"]["value"], "1.00");
    EXPECT_TRUE(ev["recall_estimate"]["value"].is_null());
    EXPECT_EQ(ev["recall_estimate"]["labeled"], 0);
}

TEST(ReviewFiles, SampleLabelOutsideTaskSpaceRejected) {
    e2e_run r;
    run_stage("ingest", r.cfg);
    import_all_accept(r.cfg);
    r.all();
    const auto tasks = samples_from_lines(io::read_lines(r.cfg.out(artifact::samples)), "samples");
    const auto& t = tasks.front();
    decision_log log(r.cfg.decisions);
    const auto before = log.records().size();
    auto bad = nlohmann::json{{"kind", "sample"}, {"key", sample_key(t.task_id, t.items[0].tweet_id)},
                              {"verdict", t.kind == sample_kind::relevance ? "Positive" : "relevant"}};
    EXPECT_THROW(import_review(r.dir.write("a.jsonl", bad.dump() + "\n"), r.cfg.output_dir, log), validation_error);
    bad["key"] = "No Such Task/precision|t000";
    bad["verdict"] = "relevant";
    EXPECT_THROW(import_review(r.dir.write("b.jsonl", bad.dump() + "\n"), r.cfg.output_dir, log), validation_error);
    EXPECT_EQ(log.records().size(), before);
}

TEST(ReviewItems, EnvelopeIdsStable) {
    EXPECT_EQ(envelope_id(review_kind::labels, "Media Watch"), envelope_id(review_kind::labels, "Media Watch"));
    EXPECT_NE(envelope_id(review_kind::labels, "Media Watch"), envelope_id(review_kind::profiles, "Media Watch"));
    EXPECT_EQ(envelope_id(review_kind::labels, "a").rfind("label-", 0), 0u);
    EXPECT_EQ(envelope_id(review_kind::labels, "a").size(), std::string("label-").size() + 16);
    for (auto k : all_review_kinds) {
        EXPECT_EQ(parse_review_kind(to_string(k)), k);
        EXPECT_EQ(review_kind_of(decision_kind_of(k)), k);
    }
    EXPECT_EQ(parse_review_kind("sample"), review_kind::samples);
    EXPECT_FALSE(parse_review_kind("moods"));
}
