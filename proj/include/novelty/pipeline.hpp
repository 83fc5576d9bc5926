#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "novelty/artifacts.hpp"
#include "novelty/churn.hpp"
#include "novelty/config.hpp"

// Stage runners shared by the CLI subcommands and run-all. Each stage reads
// its upstream artifacts (verifying the recorded input hashes unless forced),
// writes its own artifacts under the configured directories, and returns a
// machine-readable summary.

namespace novelty::pipeline {

namespace files {
inline constexpr const char* kSynthTsv = "events.tsv";
inline constexpr const char* kGroundTruth = "ground_truth.json";
inline constexpr const char* kEventCache = "events.ndjson";
inline constexpr const char* kSessions = "sessions.ndjson";
inline constexpr const char* kModel = "taste_model.json";
inline constexpr const char* kSelection = "model_selection.json";
inline constexpr const char* kPerplexityGrid = "perplexity_grid.csv";
inline constexpr const char* kTrajectories = "trajectories.ndjson";
inline constexpr const char* kPolicies = "policies.json";
inline constexpr const char* kConvergence = "convergence.csv";
inline constexpr const char* kEvaluation = "evaluation.json";
inline constexpr const char* kVopMatrix = "vop_matrix.csv";
inline constexpr const char* kVopReport = "vop.json";
inline constexpr const char* kChurnUsers = "churn_users.csv";
inline constexpr const char* kMonthlyActivity = "monthly_activity.csv";
inline constexpr const char* kChurnGroups = "churn_groups.csv";
inline constexpr const char* kRunSummary = "summary.json";
}  // namespace files

inline std::string out_path(const PipelineConfig& cfg, const char* name) {
    return (std::filesystem::path(cfg.paths.output) / name).string();
}
inline std::string cache_path(const PipelineConfig& cfg, const char* name) {
    return (std::filesystem::path(cfg.paths.cache) / name).string();
}

// The TSV run-all ingests: the synthesized log when the pipeline starts from
// synth, otherwise the configured input.
inline std::string input_tsv_path(const PipelineConfig& cfg) {
    return cfg.source == PipelineConfig::Source::Synth ? out_path(cfg, files::kSynthTsv)
                                                       : cfg.paths.input;
}

inline json confusion_json(const Confusion& c) {
    return json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

inline json score_json(const ScoreResult& s) {
    return json{{"precision", s.precision},
                {"recall", s.recall},
                {"f1", s.f1},
                {"accuracy", s.accuracy},
                {"confusion", confusion_json(s.confusion)}};
}

// ---------------------------------------------------------------------------

inline json run_synth(const PipelineConfig& cfg) {
    SynthResult result = generate(cfg.synth);
    std::ostringstream tsv;
    write_tsv(result.log, tsv);
    write_text_file(out_path(cfg, files::kSynthTsv), tsv.str());

    ArtifactHeader header{kGroundTruthFormat, 1, {}};
    write_text_file(out_path(cfg, files::kGroundTruth),
                    ground_truth_to_json(result.truth, header));

    return json{{"stage", "synth"},
                {"users", result.truth.users.size()},
                {"events", result.log.event_count()},
                {"vocab", result.log.vocab_size()},
                {"tastes", result.truth.num_tastes},
                {"artifacts", {files::kSynthTsv, files::kGroundTruth}}};
}

inline json run_ingest(const PipelineConfig& cfg, bool force,
                       ParseStrictness strictness = ParseStrictness::Lenient) {
    const std::string input = input_tsv_path(cfg);
    require_file(input);
    std::ifstream in(input, std::ios::binary);
    EventLog raw = parse_events(in, strictness);
    DatasetStats stats = dataset_stats(raw);
    EventLog pruned = prune_vocabulary(raw, static_cast<std::size_t>(cfg.vocab.min_count));
    (void)force;

    ArtifactHeader header{kEventLogFormat, 1, {{"source", file_hash(input)}}};
    write_text_file(cache_path(cfg, files::kEventCache), eventlog_to_ndjson(pruned, header));

    return json{{"stage", "ingest"},
                {"records", stats.record_count},
                {"users", stats.user_count},
                {"artists", stats.artist_count},
                {"unique_tracks", stats.unique_track_count},
                {"skipped_lines", raw.skipped_lines()},
                {"pruned_records", pruned.event_count()},
                {"pruned_vocab", pruned.vocab_size()},
                {"artifacts", {files::kEventCache}}};
}

inline std::pair<EventLog, ArtifactHeader> load_event_cache(const PipelineConfig& cfg,
                                                            bool force) {
    const std::string path = cache_path(cfg, files::kEventCache);
    auto [log, header] = eventlog_from_ndjson(read_text_file(path));
    if (!force) require_fresh(header, {{"source", input_tsv_path(cfg)}}, force);
    return {std::move(log), std::move(header)};
}

inline json run_sessionize(const PipelineConfig& cfg, bool force) {
    auto [log, _] = load_event_cache(cfg, force);
    auto users = sessionize(log, cfg.session.max_gap_seconds);
    std::size_t total_sessions = 0, total_events = 0;
    for (const auto& us : users) {
        total_sessions += us.sessions.size();
        for (const auto& s : us.sessions) total_events += s.tokens.size();
    }
    ArtifactHeader header{kSessionsFormat, 1,
                          {{"events", file_hash(cache_path(cfg, files::kEventCache))}}};
    write_text_file(out_path(cfg, files::kSessions),
                    sessions_to_ndjson(users, log.vocab_size(), header));
    return json{{"stage", "sessionize"},
                {"users", users.size()},
                {"sessions", total_sessions},
                {"mean_session_length",
                 total_sessions ? static_cast<double>(total_events) / total_sessions : 0.0},
                {"max_gap_seconds", cfg.session.max_gap_seconds},
                {"artifacts", {files::kSessions}}};
}

inline SessionsArtifact load_sessions(const PipelineConfig& cfg, bool force) {
    auto artifact = sessions_from_ndjson(read_text_file(out_path(cfg, files::kSessions)));
    if (!force)
        require_fresh(artifact.header, {{"events", cache_path(cfg, files::kEventCache)}}, force);
    return artifact;
}

inline json run_train_lda(const PipelineConfig& cfg, bool force) {
    auto sessions = load_sessions(cfg, force);
    Corpus corpus = build_corpus(sessions.users, cfg.granularity, sessions.vocab_size);
    LdaOptions opts;
    opts.num_tastes = cfg.lda.topics;
    opts.iterations = cfg.lda.iterations;
    opts.hyper_doc = cfg.lda.hyper_doc;
    opts.hyper_word = cfg.lda.hyper_word;
    opts.seed = cfg.lda.seed;
    TasteModel model = train(corpus, opts);

    ArtifactHeader header{kModelFormat, 1,
                          {{"sessions", file_hash(out_path(cfg, files::kSessions))}}};
    write_text_file(out_path(cfg, files::kModel), model_to_json(model, header));
    return json{{"stage", "train-lda"},
                {"tastes", model.num_tastes},
                {"vocab", model.vocab_size},
                {"documents", corpus.docs.size()},
                {"iterations", model.meta.iterations},
                {"final_log_likelihood", model.meta.final_log_likelihood},
                {"artifacts", {files::kModel}}};
}

inline json run_select_model(const PipelineConfig& cfg, bool force) {
    auto sessions = load_sessions(cfg, force);
    Corpus corpus = build_corpus(sessions.users, cfg.granularity, sessions.vocab_size);
    ModelSelection selection =
        select_model(corpus, cfg.select.topic_candidates, cfg.select.iteration_candidates,
                     cfg.select.heldout_fraction, cfg.select.tolerance,
                     cfg.lda.fold_in_iterations, cfg.lda.seed, cfg.threads);
    write_text_file(out_path(cfg, files::kPerplexityGrid), perplexity_grid_csv(selection.grid));

    json grid = json::array();
    for (const auto& c : selection.grid)
        grid.push_back(
            {{"K", c.num_tastes}, {"iterations", c.iterations}, {"perplexity", c.perplexity}});
    json report{{"format", "novelty-model-selection"},
                {"version", 1},
                {"inputs", json{{"sessions", file_hash(out_path(cfg, files::kSessions))}}},
                {"best_K", selection.best_num_tastes},
                {"best_iterations", selection.best_iterations},
                {"tolerance", cfg.select.tolerance},
                {"grid", grid}};
    write_text_file(out_path(cfg, files::kSelection), report.dump(2) + "\n");
    return json{{"stage", "select-model"},
                {"best_K", selection.best_num_tastes},
                {"best_iterations", selection.best_iterations},
                {"cells", selection.grid.size()},
                {"artifacts", {files::kPerplexityGrid, files::kSelection}}};
}

inline json run_assign(const PipelineConfig& cfg, bool force) {
    auto sessions = load_sessions(cfg, force);
    auto [model, model_header] = model_from_json(read_text_file(out_path(cfg, files::kModel)));
    if (!force) require_fresh(model_header, {{"sessions", out_path(cfg, files::kSessions)}}, force);

    std::vector<TasteTrajectory> trajectories(sessions.users.size());
    parallel_for(sessions.users.size(), cfg.threads, [&](std::size_t i) {
        trajectories[i] = build_trajectory(model, sessions.users[i].sessions);
    });
    std::size_t steps = 0, oov_sessions = 0;
    for (const auto& t : trajectories) {
        steps += t.steps.size();
        for (const auto& s : t.steps) oov_sessions += s.all_out_of_vocab ? 1 : 0;
    }

    ArtifactHeader header{kTrajectoriesFormat, 1,
                          {{"sessions", file_hash(out_path(cfg, files::kSessions))},
                           {"model", file_hash(out_path(cfg, files::kModel))}}};
    write_text_file(out_path(cfg, files::kTrajectories),
                    trajectories_to_ndjson(trajectories, model.num_tastes, header));
    return json{{"stage", "assign"},
                {"users", trajectories.size()},
                {"steps", steps},
                {"all_oov_sessions", oov_sessions},
                {"artifacts", {files::kTrajectories}}};
}

inline TrajectoriesArtifact load_trajectories(const PipelineConfig& cfg, bool force) {
    auto artifact = trajectories_from_ndjson(read_text_file(out_path(cfg, files::kTrajectories)));
    if (!force)
        require_fresh(artifact.header,
                      {{"sessions", out_path(cfg, files::kSessions)},
                       {"model", out_path(cfg, files::kModel)}},
                      force);
    return artifact;
}

// Chronological split of a trajectory, mirroring the session split rule.
inline std::pair<TasteTrajectory, TasteTrajectory> split_trajectory(const TasteTrajectory& traj,
                                                                    double train_fraction) {
    std::size_t k = detail::ceil_fraction(train_fraction, traj.steps.size());
    TasteTrajectory train{traj.user_id, {traj.steps.begin(), traj.steps.begin() + static_cast<std::ptrdiff_t>(k)}};
    TasteTrajectory test{traj.user_id, {traj.steps.begin() + static_cast<std::ptrdiff_t>(k), traj.steps.end()}};
    return {std::move(train), std::move(test)};
}

inline json run_train_policy(const PipelineConfig& cfg, bool force) {
    auto artifact = load_trajectories(cfg, force);

    std::vector<const TasteTrajectory*> eligible;
    std::vector<std::string> excluded;
    for (const auto& traj : artifact.trajectories) {
        if (traj.steps.size() < static_cast<std::size_t>(cfg.split.min_sessions))
            excluded.push_back(traj.user_id);
        else
            eligible.push_back(&traj);
    }
    if (eligible.empty()) throw NoEpisodes("no user has enough sessions for policy learning");

    std::vector<UserPolicyRecord> records(eligible.size());
    std::vector<std::vector<double>> traces(eligible.size());
    parallel_for(eligible.size(), cfg.threads, [&](std::size_t i) {
        const auto& traj = *eligible[i];
        auto [train_part, test_part] = split_trajectory(traj, cfg.split.train_fraction);
        (void)test_part;
        auto episodes = label_transitions(train_part);
        AgentParams params = cfg.agent;
        params.seed = mix_seed(cfg.agent.seed, fnv1a64(traj.user_id));
        auto result = train_policy(episodes, artifact.num_tastes, params, traj.user_id);
        records[i] = {std::move(result.table), std::move(result.policy), result.converged};
        traces[i] = std::move(result.sweep_max_delta);
    });

    std::size_t converged = 0;
    double total_sweeps = 0.0;
    for (const auto& rec : records) {
        converged += rec.converged ? 1 : 0;
        total_sweeps += rec.table.sweeps_run;
    }

    ArtifactHeader header{kPoliciesFormat, 1,
                          {{"trajectories", file_hash(out_path(cfg, files::kTrajectories))}}};
    write_text_file(out_path(cfg, files::kPolicies), policies_to_json(records, excluded, header));
    write_text_file(out_path(cfg, files::kConvergence), convergence_csv(records, traces));
    return json{{"stage", "train-policy"},
                {"users_trained", records.size()},
                {"users_excluded", excluded.size()},
                {"converged", converged},
                {"mean_sweeps", records.empty() ? 0.0 : total_sweeps / records.size()},
                {"artifacts", {files::kPolicies, files::kConvergence}}};
}

struct HeldoutData {
    std::vector<UserEvalData> users;           // policy + held-out episodes
    std::vector<std::vector<Episode>> train;   // training episodes, parallel to users
    std::vector<std::string> skipped;          // too few held-out steps to score
};

inline HeldoutData assemble_heldout(const PipelineConfig& cfg,
                                    const TrajectoriesArtifact& trajectories,
                                    const PoliciesArtifact& policies) {
    std::map<std::string, const TasteTrajectory*> by_user;
    for (const auto& traj : trajectories.trajectories) by_user[traj.user_id] = &traj;
    HeldoutData out;
    for (const auto& rec : policies.records) {
        auto it = by_user.find(rec.table.user_id);
        if (it == by_user.end()) throw MissingArtifact("no trajectory for user " +
                                                       rec.table.user_id);
        auto [train_part, test_part] = split_trajectory(*it->second, cfg.split.train_fraction);
        if (test_part.steps.size() < 2) {
            out.skipped.push_back(rec.table.user_id);
            continue;
        }
        out.users.push_back({rec.table.user_id, rec.policy, label_transitions(test_part)});
        out.train.push_back(label_transitions(train_part));
    }
    return out;
}

inline json run_evaluate(const PipelineConfig& cfg, bool force) {
    auto trajectories = load_trajectories(cfg, force);
    auto policies = policies_from_json(read_text_file(out_path(cfg, files::kPolicies)));
    if (!force)
        require_fresh(policies.header, {{"trajectories", out_path(cfg, files::kTrajectories)}},
                      force);
    HeldoutData data = assemble_heldout(cfg, trajectories, policies);
    if (data.users.empty()) throw NoHeldout("no user has enough held-out sessions to score");

    Confusion pooled, baseline_pooled;
    json users = json::array();
    for (std::size_t i = 0; i < data.users.size(); ++i) {
        ScoreResult own = score(data.users[i].policy, data.users[i].heldout,
                                PredictFallback::MajorityTrain);
        ScoreResult base = majority_baseline(data.train[i], data.users[i].heldout);
        pooled += own.confusion;
        baseline_pooled += base.confusion;
        json u = score_json(own);
        u["user"] = data.users[i].user_id;
        u["heldout_episodes"] = data.users[i].heldout.size();
        u["baseline_f1"] = base.f1;
        u["baseline_accuracy"] = base.accuracy;
        users.push_back(std::move(u));
    }

    ScoreResult pooled_score;
    pooled_score.confusion = pooled;
    pooled_score.precision = precision_of(pooled);
    pooled_score.recall = recall_of(pooled);
    pooled_score.f1 = f1_of(pooled);
    pooled_score.accuracy = accuracy_of(pooled);
    ScoreResult baseline_score;
    baseline_score.confusion = baseline_pooled;
    baseline_score.f1 = f1_of(baseline_pooled);
    baseline_score.accuracy = accuracy_of(baseline_pooled);

    json report{{"format", "novelty-evaluation"},
                {"version", 1},
                {"inputs",
                 json{{"trajectories", file_hash(out_path(cfg, files::kTrajectories))},
                      {"policies", file_hash(out_path(cfg, files::kPolicies))}}},
                {"pooled", score_json(pooled_score)},
                {"baseline_pooled",
                 json{{"f1", baseline_score.f1},
                      {"accuracy", baseline_score.accuracy},
                      {"confusion", confusion_json(baseline_pooled)}}},
                {"users", users},
                {"skipped_users", data.skipped}};
    write_text_file(out_path(cfg, files::kEvaluation), report.dump(2) + "\n");
    return json{{"stage", "evaluate"},
                {"users_scored", data.users.size()},
                {"f1", pooled_score.f1},
                {"accuracy", pooled_score.accuracy},
                {"baseline_f1", baseline_score.f1},
                {"baseline_accuracy", baseline_score.accuracy},
                {"artifacts", {files::kEvaluation}}};
}

inline json run_vop(const PipelineConfig& cfg, bool force) {
    auto trajectories = load_trajectories(cfg, force);
    auto policies = policies_from_json(read_text_file(out_path(cfg, files::kPolicies)));
    if (!force)
        require_fresh(policies.header, {{"trajectories", out_path(cfg, files::kTrajectories)}},
                      force);
    HeldoutData data = assemble_heldout(cfg, trajectories, policies);
    VopMatrix vop = value_of_personalization(data.users, cfg.threads);

    write_text_file(out_path(cfg, files::kVopMatrix), vop_matrix_csv(vop));
    double mean_delta = mean_of(vop.delta);
    json deltas = json::array();
    for (std::size_t i = 0; i < vop.users.size(); ++i)
        deltas.push_back({{"user", vop.users[i]},
                          {"delta", vop.delta[i]},
                          {"self_f1", vop.f1[i][i]}});
    json report{{"format", "novelty-vop"},
                {"version", 1},
                {"inputs",
                 json{{"trajectories", file_hash(out_path(cfg, files::kTrajectories))},
                      {"policies", file_hash(out_path(cfg, files::kPolicies))}}},
                {"mean_delta", mean_delta},
                {"users", deltas}};
    write_text_file(out_path(cfg, files::kVopReport), report.dump(2) + "\n");
    return json{{"stage", "vop"},
                {"users", vop.users.size()},
                {"mean_delta", mean_delta},
                {"artifacts", {files::kVopMatrix, files::kVopReport}}};
}

inline json run_churn_report(const PipelineConfig& cfg, bool force) {
    auto [log, log_header] = load_event_cache(cfg, force);
    auto trajectories = load_trajectories(cfg, force);

    std::int64_t dataset_end = 0;
    for (const auto& u : log.users())
        dataset_end = std::max(dataset_end, u.events.back().timestamp);

    std::vector<ChurnLabel> labels;
    labels.reserve(log.users().size());
    for (const auto& u : log.users())
        labels.push_back(classify_quitting(u, dataset_end, cfg.churn.year_days));

    std::vector<SimilaritySeries> series;
    std::vector<std::string> skipped;
    for (const auto& traj : trajectories.trajectories) {
        if (traj.steps.size() < 2) {
            skipped.push_back(traj.user_id);
            continue;
        }
        series.push_back(similarity_series(traj, cfg.churn.metric));
    }
    auto groups = subgroup_report(labels, series);

    std::string users_csv = "user,mu,sigma,label,activity_span_days,days_since_last\n";
    std::map<std::string, const ChurnLabel*> label_of;
    for (const auto& l : labels) label_of[l.user_id] = &l;
    for (const auto& s : series) {
        const ChurnLabel* l = label_of.at(s.user_id);
        users_csv += s.user_id + "," + format_double(s.mean) + "," + format_double(s.stddev) +
                     "," + to_string(l->label) + "," + format_double(l->activity_span_days) +
                     "," + format_double(l->days_from_last_activity_to_dataset_end) + "\n";
    }
    write_text_file(out_path(cfg, files::kChurnUsers), users_csv);

    std::string monthly_csv = "user,month,count\n";
    for (const auto& u : log.users()) {
        for (const auto& mc : monthly_activity(u)) {
            char month[16];
            std::snprintf(month, sizeof(month), "%04d-%02u", mc.year, mc.month);
            monthly_csv += u.id + "," + month + "," + std::to_string(mc.count) + "\n";
        }
    }
    write_text_file(out_path(cfg, files::kMonthlyActivity), monthly_csv);

    std::string groups_csv = "label,mean_mu,std_mu,n\n";
    json group_json = json::array();
    for (const auto& g : groups) {
        groups_csv += std::string(to_string(g.label)) + "," + format_double(g.mean_mu) + "," +
                      format_double(g.std_mu) + "," + std::to_string(g.n) + "\n";
        group_json.push_back({{"label", to_string(g.label)},
                              {"mean_mu", g.mean_mu},
                              {"std_mu", g.std_mu},
                              {"n", g.n}});
    }
    write_text_file(out_path(cfg, files::kChurnGroups), groups_csv);

    return json{{"stage", "churn-report"},
                {"users_labeled", labels.size()},
                {"users_with_series", series.size()},
                {"groups", group_json},
                {"artifacts",
                 {files::kChurnUsers, files::kMonthlyActivity, files::kChurnGroups}}};
}

// Chains the pipeline end to end: (synth when configured) -> ingest ->
// sessionize -> train-lda -> assign -> train-policy -> evaluate -> vop ->
// churn-report. Model selection stays a standalone command; the chained run
// trains at the configured taste count.
inline json run_all(const PipelineConfig& cfg, bool force) {
    json stages = json::array();
    if (cfg.source == PipelineConfig::Source::Synth) stages.push_back(run_synth(cfg));
    stages.push_back(run_ingest(cfg, force));
    stages.push_back(run_sessionize(cfg, force));
    stages.push_back(run_train_lda(cfg, force));
    stages.push_back(run_assign(cfg, force));
    stages.push_back(run_train_policy(cfg, force));
    stages.push_back(run_evaluate(cfg, force));
    stages.push_back(run_vop(cfg, force));
    stages.push_back(run_churn_report(cfg, force));
    json summary{{"stage", "run-all"}, {"stages", stages}};
    write_text_file(out_path(cfg, files::kRunSummary), summary.dump(2) + "\n");
    return summary;
}

}  // namespace novelty::pipeline
