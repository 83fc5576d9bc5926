#pragma once

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "novelty/agent.hpp"
#include "novelty/churn.hpp"
#include "novelty/common.hpp"
#include "novelty/sessions.hpp"
#include "novelty/synth.hpp"

namespace novelty {

// Every knob of the pipeline in one place, persisted as "key = value" lines.
// Defaults are the reference operating point: 20 tastes, 1000 sweeps, a
// one-hour session gap, gamma 0.9, learning-rate exponent 0.65, 80-20 split.
struct PipelineConfig {
    struct Paths {
        std::string input = "data/events.tsv";
        std::string cache = "cache";
        std::string output = "out";
    } paths;

    enum class Source { Synth, Tsv };
    Source source = Source::Synth;  // where run-all starts

    struct SessionCfg {
        std::int64_t max_gap_seconds = 3600;
    } session;

    Corpus::Granularity granularity = Corpus::Granularity::User;

    struct VocabCfg {
        int min_count = 10;
    } vocab;

    struct LdaCfg {
        int topics = 20;
        int iterations = 1000;
        double hyper_doc = -1.0;  // <= 0: use 50/K
        double hyper_word = 0.01;
        int fold_in_iterations = 20;
        std::uint64_t seed = 7;
    } lda;

    struct SelectCfg {
        std::vector<int> topic_candidates = {1, 2, 5, 10, 20, 40};
        std::vector<int> iteration_candidates = {10, 100, 1000};
        double heldout_fraction = 0.1;
        double tolerance = 0.02;
    } select;

    AgentParams agent;

    struct SplitCfg {
        double train_fraction = 0.8;
        int min_sessions = 5;
    } split;

    struct ChurnCfg {
        double year_days = 365.0;
        SimilarityMetric metric = SimilarityMetric::Cosine;
    } churn;

    SynthConfig synth = [] {
        SynthConfig s;
        s.cohorts = SynthConfig::default_cohorts(50);
        return s;
    }();

    int threads = 1;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t");
    std::size_t e = s.find_last_not_of(" \t");
    return b == std::string_view::npos ? std::string() : std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    if (s.empty()) out.clear();
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T v{};
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || p != value.data() + value.size())
        throw ConfigError(key + ": cannot parse '" + value + "'");
    return v;
}

inline double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": cannot parse '" + value + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

// Cohort grammar: archetype:count[:continuing|quitting[:p_stay[:noise]]],
// comma-separated. Example: "novel:20,drifter:20:quitting:0.4".
inline Cohort parse_cohort(const std::string& key, const std::string& text) {
    auto parts = split_on(text, ':');
    if (parts.size() < 2 || parts.size() > 5)
        throw ConfigError(key + ": bad cohort '" + text + "'");
    Cohort c;
    if (parts[0] == "novel") c.archetype = BehaviorArchetype::AlwaysNovel;
    else if (parts[0] == "familiar") c.archetype = BehaviorArchetype::AlwaysFamiliar;
    else if (parts[0] == "state") c.archetype = BehaviorArchetype::StatePolicy;
    else if (parts[0] == "drifter") c.archetype = BehaviorArchetype::Drifter;
    else throw ConfigError(key + ": unknown archetype '" + parts[0] + "'");
    c.count = parse_number<int>(key, parts[1]);
    c.p_stay = c.archetype == BehaviorArchetype::AlwaysFamiliar ? 1.0 : 0.0;
    if (c.archetype == BehaviorArchetype::Drifter) c.p_stay = 0.5;
    if (parts.size() >= 3) {
        if (parts[2] == "quitting") c.quitting = true;
        else if (parts[2] == "continuing") c.quitting = false;
        else throw ConfigError(key + ": expected continuing/quitting, got '" + parts[2] + "'");
    }
    if (parts.size() >= 4) c.p_stay = parse_double(key, parts[3]);
    if (parts.size() >= 5) c.noise = parse_double(key, parts[4]);
    return c;
}

inline std::string cohort_to_string(const Cohort& c) {
    std::string out = to_string(c.archetype);
    out += ":" + std::to_string(c.count);
    out += c.quitting ? ":quitting" : ":continuing";
    out += ":" + format_double(c.p_stay);
    out += ":" + format_double(c.noise);
    return out;
}

}  // namespace detail

// Flat key/value image of a config, in canonical key order. save() and the
// environment-override scan both run off this list.
inline std::vector<std::pair<std::string, std::string>> config_to_kv(const PipelineConfig& c) {
    auto join_ints = [](const std::vector<int>& v) {
        std::string out;
        for (std::size_t i = 0; i < v.size(); ++i)
            out += (i ? "," : "") + std::to_string(v[i]);
        return out;
    };
    auto join_cohorts = [](const std::vector<Cohort>& v) {
        std::string out;
        for (std::size_t i = 0; i < v.size(); ++i)
            out += (i ? "," : "") + detail::cohort_to_string(v[i]);
        return out;
    };
    const char* separation = c.synth.separation == TasteSeparation::Disjoint ? "disjoint"
                             : c.synth.separation == TasteSeparation::Blend  ? "blend"
                                                                             : "dirichlet";
    return {
        {"paths.input", c.paths.input},
        {"paths.cache", c.paths.cache},
        {"paths.output", c.paths.output},
        {"pipeline.source", c.source == PipelineConfig::Source::Synth ? "synth" : "tsv"},
        {"pipeline.threads", std::to_string(c.threads)},
        {"session.max_gap_seconds", std::to_string(c.session.max_gap_seconds)},
        {"corpus.granularity",
         c.granularity == Corpus::Granularity::User ? "user" : "session"},
        {"vocab.min_count", std::to_string(c.vocab.min_count)},
        {"lda.topics", std::to_string(c.lda.topics)},
        {"lda.iterations", std::to_string(c.lda.iterations)},
        {"lda.hyper_doc", c.lda.hyper_doc > 0 ? format_double(c.lda.hyper_doc) : "auto"},
        {"lda.hyper_word", format_double(c.lda.hyper_word)},
        {"lda.fold_in_iterations", std::to_string(c.lda.fold_in_iterations)},
        {"lda.seed", std::to_string(c.lda.seed)},
        {"select.topic_candidates", join_ints(c.select.topic_candidates)},
        {"select.iteration_candidates", join_ints(c.select.iteration_candidates)},
        {"select.heldout_fraction", format_double(c.select.heldout_fraction)},
        {"select.tolerance", format_double(c.select.tolerance)},
        {"agent.gamma", format_double(c.agent.gamma)},
        {"agent.lr_exponent", format_double(c.agent.lr_exponent)},
        {"agent.epsilon_start", format_double(c.agent.epsilon_start)},
        {"agent.epsilon_end", format_double(c.agent.epsilon_end)},
        {"agent.reward_correct", format_double(c.agent.reward_correct)},
        {"agent.reward_wrong", format_double(c.agent.reward_wrong)},
        {"agent.action_cost", format_double(c.agent.action_cost)},
        {"agent.convergence_tol", format_double(c.agent.convergence_tol)},
        {"agent.max_sweeps", std::to_string(c.agent.max_sweeps)},
        {"agent.global_step_rate", c.agent.global_step_rate ? "true" : "false"},
        {"agent.seed", std::to_string(c.agent.seed)},
        {"split.train_fraction", format_double(c.split.train_fraction)},
        {"split.min_sessions", std::to_string(c.split.min_sessions)},
        {"churn.year_days", format_double(c.churn.year_days)},
        {"churn.similarity",
         c.churn.metric == SimilarityMetric::Cosine ? "cosine" : "one_minus_tv"},
        {"synth.tastes", std::to_string(c.synth.num_tastes)},
        {"synth.vocab", std::to_string(c.synth.vocab_size)},
        {"synth.sessions_per_user", std::to_string(c.synth.sessions_per_user)},
        {"synth.session_len_min", std::to_string(c.synth.session_len_min)},
        {"synth.session_len_max", std::to_string(c.synth.session_len_max)},
        {"synth.separation", separation},
        {"synth.blend_weight", format_double(c.synth.blend_weight)},
        {"synth.dirichlet_concentration", format_double(c.synth.dirichlet_concentration)},
        {"synth.zipf", c.synth.zipf_tokens ? "true" : "false"},
        {"synth.cohorts", join_cohorts(c.synth.cohorts)},
        {"synth.seed", std::to_string(c.synth.seed)},
    };
}

inline void config_apply(PipelineConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_number;
    auto ints = [&](const std::string& v) {
        std::vector<int> out;
        for (const auto& part : detail::split_on(v, ','))
            out.push_back(parse_number<int>(key, part));
        return out;
    };
    if (key == "paths.input") c.paths.input = value;
    else if (key == "paths.cache") c.paths.cache = value;
    else if (key == "paths.output") c.paths.output = value;
    else if (key == "pipeline.source") {
        if (value == "synth") c.source = PipelineConfig::Source::Synth;
        else if (value == "tsv") c.source = PipelineConfig::Source::Tsv;
        else throw ConfigError(key + ": expected synth|tsv");
    } else if (key == "pipeline.threads") c.threads = parse_number<int>(key, value);
    else if (key == "session.max_gap_seconds")
        c.session.max_gap_seconds = parse_number<std::int64_t>(key, value);
    else if (key == "corpus.granularity") {
        if (value == "user") c.granularity = Corpus::Granularity::User;
        else if (value == "session") c.granularity = Corpus::Granularity::Session;
        else throw ConfigError(key + ": expected user|session");
    } else if (key == "vocab.min_count") c.vocab.min_count = parse_number<int>(key, value);
    else if (key == "lda.topics") c.lda.topics = parse_number<int>(key, value);
    else if (key == "lda.iterations") c.lda.iterations = parse_number<int>(key, value);
    else if (key == "lda.hyper_doc")
        c.lda.hyper_doc = value == "auto" ? -1.0 : parse_double(key, value);
    else if (key == "lda.hyper_word") c.lda.hyper_word = parse_double(key, value);
    else if (key == "lda.fold_in_iterations")
        c.lda.fold_in_iterations = parse_number<int>(key, value);
    else if (key == "lda.seed") c.lda.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "select.topic_candidates") c.select.topic_candidates = ints(value);
    else if (key == "select.iteration_candidates") c.select.iteration_candidates = ints(value);
    else if (key == "select.heldout_fraction")
        c.select.heldout_fraction = parse_double(key, value);
    else if (key == "select.tolerance") c.select.tolerance = parse_double(key, value);
    else if (key == "agent.gamma") c.agent.gamma = parse_double(key, value);
    else if (key == "agent.lr_exponent") c.agent.lr_exponent = parse_double(key, value);
    else if (key == "agent.epsilon_start") c.agent.epsilon_start = parse_double(key, value);
    else if (key == "agent.epsilon_end") c.agent.epsilon_end = parse_double(key, value);
    else if (key == "agent.reward_correct") c.agent.reward_correct = parse_double(key, value);
    else if (key == "agent.reward_wrong") c.agent.reward_wrong = parse_double(key, value);
    else if (key == "agent.action_cost") c.agent.action_cost = parse_double(key, value);
    else if (key == "agent.convergence_tol") c.agent.convergence_tol = parse_double(key, value);
    else if (key == "agent.max_sweeps") c.agent.max_sweeps = parse_number<int>(key, value);
    else if (key == "agent.global_step_rate") c.agent.global_step_rate = parse_bool(key, value);
    else if (key == "agent.seed") c.agent.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "split.train_fraction") c.split.train_fraction = parse_double(key, value);
    else if (key == "split.min_sessions") c.split.min_sessions = parse_number<int>(key, value);
    else if (key == "churn.year_days") c.churn.year_days = parse_double(key, value);
    else if (key == "churn.similarity") {
        if (value == "cosine") c.churn.metric = SimilarityMetric::Cosine;
        else if (value == "one_minus_tv") c.churn.metric = SimilarityMetric::OneMinusTotalVariation;
        else throw ConfigError(key + ": expected cosine|one_minus_tv");
    } else if (key == "synth.tastes") c.synth.num_tastes = parse_number<int>(key, value);
    else if (key == "synth.vocab") c.synth.vocab_size = parse_number<int>(key, value);
    else if (key == "synth.sessions_per_user")
        c.synth.sessions_per_user = parse_number<int>(key, value);
    else if (key == "synth.session_len_min")
        c.synth.session_len_min = parse_number<int>(key, value);
    else if (key == "synth.session_len_max")
        c.synth.session_len_max = parse_number<int>(key, value);
    else if (key == "synth.separation") {
        if (value == "disjoint") c.synth.separation = TasteSeparation::Disjoint;
        else if (value == "blend") c.synth.separation = TasteSeparation::Blend;
        else if (value == "dirichlet") c.synth.separation = TasteSeparation::Dirichlet;
        else throw ConfigError(key + ": expected disjoint|blend|dirichlet");
    } else if (key == "synth.blend_weight") c.synth.blend_weight = parse_double(key, value);
    else if (key == "synth.dirichlet_concentration")
        c.synth.dirichlet_concentration = parse_double(key, value);
    else if (key == "synth.zipf") c.synth.zipf_tokens = parse_bool(key, value);
    else if (key == "synth.cohorts") {
        c.synth.cohorts.clear();
        for (const auto& part : detail::split_on(value, ','))
            c.synth.cohorts.push_back(detail::parse_cohort(key, part));
    } else if (key == "synth.seed") c.synth.seed = parse_number<std::uint64_t>(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

// Environment override for key "a.b_c" is NOVELTY_A_B_C.
inline std::string env_name_for(const std::string& key) {
    std::string name = "NOVELTY_";
    for (char ch : key) {
        if (ch == '.') name += '_';
        else name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    }
    return name;
}

inline void apply_env_overrides(PipelineConfig& config) {
    for (const auto& [key, _] : config_to_kv(config)) {
        const char* v = std::getenv(env_name_for(key).c_str());
        if (v != nullptr) config_apply(config, key, v);
    }
}

inline PipelineConfig parse_config(std::istream& in) {
    PipelineConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        config_apply(config, detail::trim(trimmed.substr(0, eq)),
                     detail::trim(trimmed.substr(eq + 1)));
    }
    return config;
}

inline PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse_config(in);
}

inline void save_config(const PipelineConfig& config, std::ostream& out) {
    std::string section;
    for (const auto& [key, value] : config_to_kv(config)) {
        std::string prefix = key.substr(0, key.find('.'));
        if (prefix != section) {
            if (!section.empty()) out << '\n';
            section = prefix;
        }
        out << key << " = " << value << '\n';
    }
}

inline void validate(const PipelineConfig& c) {
    if (c.session.max_gap_seconds <= 0) throw ConfigError("session.max_gap_seconds must be > 0");
    if (c.vocab.min_count < 1) throw ConfigError("vocab.min_count must be >= 1");
    if (c.lda.topics < 1) throw ConfigError("lda.topics must be >= 1");
    if (c.lda.iterations < 1) throw ConfigError("lda.iterations must be >= 1");
    if (c.lda.fold_in_iterations < 0) throw ConfigError("lda.fold_in_iterations must be >= 0");
    if (!(c.select.heldout_fraction > 0.0 && c.select.heldout_fraction < 1.0))
        throw ConfigError("select.heldout_fraction must be in (0, 1)");
    if (c.select.tolerance < 0.0) throw ConfigError("select.tolerance must be >= 0");
    if (c.select.topic_candidates.empty() || c.select.iteration_candidates.empty())
        throw ConfigError("select candidate lists must be non-empty");
    if (!(c.split.train_fraction > 0.0 && c.split.train_fraction < 1.0))
        throw ConfigError("split.train_fraction must be in (0, 1)");
    if (c.split.min_sessions < 2) throw ConfigError("split.min_sessions must be >= 2");
    if (c.churn.year_days <= 0.0) throw ConfigError("churn.year_days must be > 0");
    if (c.threads < 1) throw ConfigError("pipeline.threads must be >= 1");
    try {
        c.agent.validate();
    } catch (const BadConfig& e) {
        throw ConfigError(std::string("agent: ") + e.what());
    }
}

}  // namespace novelty
