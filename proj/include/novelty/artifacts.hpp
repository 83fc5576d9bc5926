#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "novelty/agent.hpp"
#include "novelty/assignment.hpp"
#include "novelty/common.hpp"
#include "novelty/eval.hpp"
#include "novelty/events.hpp"
#include "novelty/lda.hpp"
#include "novelty/sessions.hpp"
#include "novelty/synth.hpp"
#include "novelty/timeutil.hpp"

// On-disk formats. Every artifact starts with a header carrying its format
// name, a schema version, and the content hashes of the inputs it was built
// from; downstream stages verify those hashes before trusting a file. Writers
// are deterministic byte for byte: keys are emitted sorted, doubles in
// shortest round-trip form, and no wall-clock time or absolute path is ever
// embedded.

namespace novelty {

using json = nlohmann::json;

struct ArtifactHeader {
    std::string format;
    int version = 1;
    std::map<std::string, std::string> inputs;  // role -> content hash
};

inline json header_to_json(const ArtifactHeader& h) {
    json j;
    j["format"] = h.format;
    j["version"] = h.version;
    j["inputs"] = h.inputs;
    return j;
}

inline ArtifactHeader header_from_json(const json& j, const std::string& expected_format) {
    ArtifactHeader h;
    h.format = j.at("format").get<std::string>();
    h.version = j.at("version").get<int>();
    if (j.contains("inputs")) h.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    if (h.format != expected_format)
        throw MissingArtifact("expected a '" + expected_format + "' artifact, found '" + h.format +
                              "'");
    return h;
}

inline void require_file(const std::string& path) {
    if (!std::filesystem::exists(path)) throw MissingArtifact("missing artifact: " + path);
}

// Verifies that the hashes recorded in an artifact header still match the
// files on disk. --force downgrades a mismatch to acceptance.
inline void require_fresh(const ArtifactHeader& header,
                          const std::vector<std::pair<std::string, std::string>>& role_paths,
                          bool force) {
    for (const auto& [role, path] : role_paths) {
        auto it = header.inputs.find(role);
        if (it == header.inputs.end()) continue;
        require_file(path);
        if (file_hash(path) != it->second && !force)
            throw StaleArtifact("artifact is stale: input '" + role + "' (" + path +
                                ") changed since it was built; re-run the upstream stage or pass "
                                "--force");
    }
}

inline void write_text_file(const std::string& path, const std::string& bytes) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out << bytes;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("missing artifact: " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// Event log cache: newline-delimited JSON, one header line then one object
// per event, grouped by user in canonical order.
// ---------------------------------------------------------------------------

inline constexpr const char* kEventLogFormat = "novelty-eventlog";

inline std::string eventlog_to_ndjson(const EventLog& log, const ArtifactHeader& header) {
    std::ostringstream out;
    json h = header_to_json(header);
    h["skipped_lines"] = log.skipped_lines();
    out << h.dump() << '\n';
    for (const auto& u : log.users()) {
        for (const auto& ev : u.events) {
            json j;
            j["u"] = ev.user_id;
            j["ts"] = timeutil::format_iso8601(ev.timestamp);
            j["aid"] = ev.artist_id;
            j["an"] = ev.artist_name;
            j["tid"] = ev.track_id;
            j["tn"] = ev.track_name;
            out << j.dump() << '\n';
        }
    }
    return out.str();
}

inline std::pair<EventLog, ArtifactHeader> eventlog_from_ndjson(const std::string& bytes) {
    std::istringstream in(bytes);
    std::string line;
    if (!std::getline(in, line)) throw MissingArtifact("empty event log cache");
    json h = json::parse(line);
    ArtifactHeader header = header_from_json(h, kEventLogFormat);
    std::size_t skipped = h.value("skipped_lines", std::size_t{0});
    std::vector<Event> events;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        Event ev;
        ev.user_id = j.at("u").get<std::string>();
        auto ts = timeutil::parse_iso8601(j.at("ts").get<std::string>());
        if (!ts) throw Error("bad timestamp in event log cache");
        ev.timestamp = *ts;
        ev.artist_id = j.at("aid").get<std::string>();
        ev.artist_name = j.at("an").get<std::string>();
        ev.track_id = j.at("tid").get<std::string>();
        ev.track_name = j.at("tn").get<std::string>();
        events.push_back(std::move(ev));
    }
    return {EventLog::from_events(std::move(events), skipped), header};
}

// ---------------------------------------------------------------------------
// Sessions: header line then {user, start, end, tokens[]} per session.
// ---------------------------------------------------------------------------

inline constexpr const char* kSessionsFormat = "novelty-sessions";

inline std::string sessions_to_ndjson(std::span<const UserSessions> users, int vocab_size,
                                      const ArtifactHeader& header) {
    std::ostringstream out;
    json h = header_to_json(header);
    h["vocab_size"] = vocab_size;
    out << h.dump() << '\n';
    for (const auto& us : users) {
        for (const auto& s : us.sessions) {
            json j;
            j["user"] = s.user_id;
            j["start"] = timeutil::format_iso8601(s.start);
            j["end"] = timeutil::format_iso8601(s.end);
            j["tokens"] = s.tokens;
            out << j.dump() << '\n';
        }
    }
    return out.str();
}

struct SessionsArtifact {
    std::vector<UserSessions> users;
    int vocab_size = 0;
    ArtifactHeader header;
};

inline SessionsArtifact sessions_from_ndjson(const std::string& bytes) {
    std::istringstream in(bytes);
    std::string line;
    if (!std::getline(in, line)) throw MissingArtifact("empty sessions artifact");
    json h = json::parse(line);
    SessionsArtifact out;
    out.header = header_from_json(h, kSessionsFormat);
    out.vocab_size = h.at("vocab_size").get<int>();
    std::map<std::string, std::size_t> index;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        Session s;
        s.user_id = j.at("user").get<std::string>();
        auto start = timeutil::parse_iso8601(j.at("start").get<std::string>());
        auto end = timeutil::parse_iso8601(j.at("end").get<std::string>());
        if (!start || !end) throw Error("bad timestamp in sessions artifact");
        s.start = *start;
        s.end = *end;
        s.tokens = j.at("tokens").get<std::vector<int>>();
        auto [it, inserted] = index.try_emplace(s.user_id, out.users.size());
        if (inserted) out.users.push_back({s.user_id, {}});
        out.users[it->second].sessions.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Taste model: one JSON document.
// ---------------------------------------------------------------------------

inline constexpr const char* kModelFormat = "novelty-taste-model";

inline std::string model_to_json(const TasteModel& model, const ArtifactHeader& header) {
    json j = header_to_json(header);
    j["num_tastes"] = model.num_tastes;
    j["vocab_size"] = model.vocab_size;
    j["hyper_doc"] = model.hyper_doc;
    j["hyper_word"] = model.hyper_word;
    j["seed"] = model.meta.seed;
    j["iterations"] = model.meta.iterations;
    j["final_log_likelihood"] = model.meta.final_log_likelihood;
    j["users"] = model.users;
    j["user_taste"] = model.user_taste;
    j["taste_track"] = model.taste_track;
    return j.dump(2) + "\n";
}

inline std::pair<TasteModel, ArtifactHeader> model_from_json(const std::string& bytes) {
    json j = json::parse(bytes);
    ArtifactHeader header = header_from_json(j, kModelFormat);
    TasteModel model;
    model.num_tastes = j.at("num_tastes").get<int>();
    model.vocab_size = j.at("vocab_size").get<int>();
    model.hyper_doc = j.at("hyper_doc").get<double>();
    model.hyper_word = j.at("hyper_word").get<double>();
    model.meta.seed = j.at("seed").get<std::uint64_t>();
    model.meta.iterations = j.at("iterations").get<int>();
    model.meta.final_log_likelihood = j.at("final_log_likelihood").get<double>();
    model.users = j.at("users").get<std::vector<std::string>>();
    model.user_taste = j.at("user_taste").get<std::vector<std::vector<double>>>();
    model.taste_track = j.at("taste_track").get<std::vector<std::vector<double>>>();
    model.rebuild_user_index();
    return {std::move(model), header};
}

// ---------------------------------------------------------------------------
// Trajectories: header line then {user, session_index, assigned, posterior[]}.
// ---------------------------------------------------------------------------

inline constexpr const char* kTrajectoriesFormat = "novelty-trajectories";

inline std::string trajectories_to_ndjson(std::span<const TasteTrajectory> trajectories,
                                          int num_tastes, const ArtifactHeader& header) {
    std::ostringstream out;
    json h = header_to_json(header);
    h["num_tastes"] = num_tastes;
    out << h.dump() << '\n';
    for (const auto& traj : trajectories) {
        for (const auto& step : traj.steps) {
            json j;
            j["user"] = traj.user_id;
            j["session_index"] = step.session_index;
            j["assigned"] = step.assigned_taste;
            j["posterior"] = step.posterior;
            j["all_oov"] = step.all_out_of_vocab;
            out << j.dump() << '\n';
        }
    }
    return out.str();
}

struct TrajectoriesArtifact {
    std::vector<TasteTrajectory> trajectories;
    int num_tastes = 0;
    ArtifactHeader header;
};

inline TrajectoriesArtifact trajectories_from_ndjson(const std::string& bytes) {
    std::istringstream in(bytes);
    std::string line;
    if (!std::getline(in, line)) throw MissingArtifact("empty trajectories artifact");
    json h = json::parse(line);
    TrajectoriesArtifact out;
    out.header = header_from_json(h, kTrajectoriesFormat);
    out.num_tastes = h.at("num_tastes").get<int>();
    std::map<std::string, std::size_t> index;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        std::string user = j.at("user").get<std::string>();
        auto [it, inserted] = index.try_emplace(user, out.trajectories.size());
        if (inserted) out.trajectories.push_back({user, {}});
        TrajectoryStep step;
        step.session_index = j.at("session_index").get<int>();
        step.assigned_taste = j.at("assigned").get<int>();
        step.posterior = j.at("posterior").get<std::vector<double>>();
        step.all_out_of_vocab = j.value("all_oov", false);
        out.trajectories[it->second].steps.push_back(std::move(step));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Policies: one JSON document holding every user's Q table and policy.
// ---------------------------------------------------------------------------

inline constexpr const char* kPoliciesFormat = "novelty-policies";

struct UserPolicyRecord {
    QTable table;
    Policy policy;
    bool converged = false;
};

inline std::string policies_to_json(std::span<const UserPolicyRecord> records,
                                    std::span<const std::string> excluded_users,
                                    const ArtifactHeader& header) {
    json j = header_to_json(header);
    json users = json::array();
    for (const auto& rec : records) {
        json u;
        u["user"] = rec.table.user_id;
        u["K"] = rec.table.num_states;
        json actions = json::array();
        for (PolicyAction a : rec.policy.actions) actions.push_back(to_string(a));
        u["actions"] = actions;
        json q = json::array();
        json visits = json::array();
        for (int s = 0; s < rec.table.num_states; ++s) {
            const auto& row = rec.table.q[static_cast<std::size_t>(s)];
            q.push_back(json::array({row[0], row[1]}));
            const auto& v = rec.table.visits[static_cast<std::size_t>(s)];
            visits.push_back(json::array({v[0], v[1]}));
        }
        u["q"] = q;
        u["visits"] = visits;
        u["sweeps"] = rec.table.sweeps_run;
        u["converged"] = rec.converged;
        u["majority_train"] = to_string(rec.policy.majority_train);
        users.push_back(std::move(u));
    }
    j["users"] = users;
    j["excluded_users"] = std::vector<std::string>(excluded_users.begin(), excluded_users.end());
    return j.dump(2) + "\n";
}

struct PoliciesArtifact {
    std::vector<UserPolicyRecord> records;
    std::vector<std::string> excluded_users;
    ArtifactHeader header;
};

inline PoliciesArtifact policies_from_json(const std::string& bytes) {
    json j = json::parse(bytes);
    PoliciesArtifact out;
    out.header = header_from_json(j, kPoliciesFormat);
    out.excluded_users = j.value("excluded_users", std::vector<std::string>{});
    for (const auto& u : j.at("users")) {
        UserPolicyRecord rec;
        rec.table.user_id = u.at("user").get<std::string>();
        rec.table.num_states = u.at("K").get<int>();
        rec.table.sweeps_run = u.at("sweeps").get<int>();
        rec.converged = u.at("converged").get<bool>();
        for (const auto& row : u.at("q"))
            rec.table.q.push_back({row.at(0).get<double>(), row.at(1).get<double>()});
        for (const auto& row : u.at("visits"))
            rec.table.visits.push_back(
                {row.at(0).get<std::int64_t>(), row.at(1).get<std::int64_t>()});
        rec.policy.user_id = rec.table.user_id;
        for (const auto& a : u.at("actions")) {
            std::string s = a.get<std::string>();
            rec.policy.actions.push_back(s == "novel"      ? PolicyAction::Novel
                                         : s == "familiar" ? PolicyAction::Familiar
                                                           : PolicyAction::Unvisited);
        }
        rec.policy.majority_train = u.at("majority_train").get<std::string>() == "novel"
                                        ? AgentAction::Novel
                                        : AgentAction::Familiar;
        out.records.push_back(std::move(rec));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ground truth (synth output): one JSON document.
// ---------------------------------------------------------------------------

inline constexpr const char* kGroundTruthFormat = "novelty-ground-truth";

inline std::string ground_truth_to_json(const GroundTruth& truth, const ArtifactHeader& header) {
    json j = header_to_json(header);
    j["num_tastes"] = truth.num_tastes;
    j["vocab_size"] = truth.vocab_size;
    j["taste_track"] = truth.taste_track;
    j["track_ids"] = truth.track_ids;
    json users = json::array();
    for (const auto& u : truth.users) {
        json uj;
        uj["user"] = u.user_id;
        uj["archetype"] = to_string(u.archetype);
        uj["p_stay"] = u.p_stay;
        uj["noise"] = u.noise;
        uj["quitting"] = u.quitting;
        if (u.policy) {
            json actions = json::array();
            for (AgentAction a : *u.policy) actions.push_back(to_string(a));
            uj["policy"] = actions;
        }
        uj["taste_chain"] = u.taste_chain;
        uj["mixture"] = u.mixture;
        users.push_back(std::move(uj));
    }
    j["users"] = users;
    return j.dump(2) + "\n";
}

inline std::pair<GroundTruth, ArtifactHeader> ground_truth_from_json(const std::string& bytes) {
    json j = json::parse(bytes);
    ArtifactHeader header = header_from_json(j, kGroundTruthFormat);
    GroundTruth truth;
    truth.num_tastes = j.at("num_tastes").get<int>();
    truth.vocab_size = j.at("vocab_size").get<int>();
    truth.taste_track = j.at("taste_track").get<std::vector<std::vector<double>>>();
    truth.track_ids = j.at("track_ids").get<std::vector<std::string>>();
    for (const auto& uj : j.at("users")) {
        PlantedUser u;
        u.user_id = uj.at("user").get<std::string>();
        std::string arch = uj.at("archetype").get<std::string>();
        u.archetype = arch == "novel"      ? BehaviorArchetype::AlwaysNovel
                      : arch == "familiar" ? BehaviorArchetype::AlwaysFamiliar
                      : arch == "state"    ? BehaviorArchetype::StatePolicy
                                           : BehaviorArchetype::Drifter;
        u.p_stay = uj.at("p_stay").get<double>();
        u.noise = uj.at("noise").get<double>();
        u.quitting = uj.at("quitting").get<bool>();
        if (uj.contains("policy")) {
            std::vector<AgentAction> policy;
            for (const auto& a : uj.at("policy"))
                policy.push_back(a.get<std::string>() == "novel" ? AgentAction::Novel
                                                                 : AgentAction::Familiar);
            u.policy = std::move(policy);
        }
        u.taste_chain = uj.at("taste_chain").get<std::vector<int>>();
        u.mixture = uj.at("mixture").get<std::vector<double>>();
        truth.users.push_back(std::move(u));
    }
    return {std::move(truth), header};
}

// ---------------------------------------------------------------------------
// CSV exports behind the plots and reports.
// ---------------------------------------------------------------------------

inline std::string perplexity_grid_csv(std::span<const SelectionCell> grid) {
    std::string out = "K,iterations,perplexity\n";
    for (const auto& c : grid)
        out += std::to_string(c.num_tastes) + "," + std::to_string(c.iterations) + "," +
               format_double(c.perplexity) + "\n";
    return out;
}

inline std::string convergence_csv(std::span<const UserPolicyRecord> records,
                                   std::span<const std::vector<double>> traces) {
    std::string out = "user,sweep,max_delta\n";
    for (std::size_t i = 0; i < records.size(); ++i)
        for (std::size_t s = 0; s < traces[i].size(); ++s)
            out += records[i].table.user_id + "," + std::to_string(s + 1) + "," +
                   format_double(traces[i][s]) + "\n";
    return out;
}

inline std::string vop_matrix_csv(const VopMatrix& vop) {
    std::string out = "data_user";
    for (const auto& u : vop.users) out += "," + u;
    out += "\n";
    for (std::size_t i = 0; i < vop.users.size(); ++i) {
        out += vop.users[i];
        for (std::size_t j = 0; j < vop.users.size(); ++j) out += "," + format_double(vop.f1[i][j]);
        out += "\n";
    }
    return out;
}

}  // namespace novelty
