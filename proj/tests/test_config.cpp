#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <sstream>

#include "novelty/config.hpp"

using namespace novelty;

TEST_CASE("defaults are the reference operating point") {
    PipelineConfig cfg;
    REQUIRE(cfg.lda.topics == 20);
    REQUIRE(cfg.lda.iterations == 1000);
    REQUIRE(cfg.session.max_gap_seconds == 3600);
    REQUIRE(cfg.agent.gamma == 0.9);
    REQUIRE(cfg.agent.lr_exponent == 0.65);
    REQUIRE(cfg.split.train_fraction == 0.8);
    REQUIRE(cfg.granularity == Corpus::Granularity::User);
    REQUIRE(cfg.vocab.min_count == 10);
    REQUIRE(cfg.agent.reward_correct == 1.0);
    REQUIRE(cfg.agent.reward_wrong == -1.0);
    REQUIRE_NOTHROW(validate(cfg));
}

TEST_CASE("config round-trips losslessly through its file format") {
    PipelineConfig cfg;
    cfg.paths.input = "elsewhere/raw.tsv";
    cfg.source = PipelineConfig::Source::Tsv;
    cfg.lda.topics = 13;
    cfg.lda.hyper_doc = 0.75;
    cfg.agent.epsilon_start = 0.35;
    cfg.select.topic_candidates = {3, 9, 27};
    cfg.churn.metric = SimilarityMetric::OneMinusTotalVariation;
    cfg.granularity = Corpus::Granularity::Session;
    cfg.synth.cohorts = {{BehaviorArchetype::Drifter, 20, true, 0.4, 0.05},
                         {BehaviorArchetype::StatePolicy, 10, false, 0.0, 0.0}};
    cfg.synth.separation = TasteSeparation::Blend;
    cfg.threads = 4;

    std::ostringstream out;
    save_config(cfg, out);
    std::istringstream in(out.str());
    PipelineConfig parsed = parse_config(in);
    REQUIRE(config_to_kv(parsed) == config_to_kv(cfg));

    // and the auto marker survives
    PipelineConfig auto_hyper;
    std::ostringstream out2;
    save_config(auto_hyper, out2);
    REQUIRE(out2.str().find("lda.hyper_doc = auto") != std::string::npos);
}

TEST_CASE("comments, blanks and whitespace are tolerated") {
    std::istringstream in(
        "# a comment\n"
        "\n"
        "  lda.topics =  7   # trailing comment\n"
        "paths.output= somewhere\n");
    auto cfg = parse_config(in);
    REQUIRE(cfg.lda.topics == 7);
    REQUIRE(cfg.paths.output == "somewhere");
}

TEST_CASE("unknown keys and bad values are config errors") {
    std::istringstream unknown("no.such.key = 1\n");
    REQUIRE_THROWS_AS(parse_config(unknown), ConfigError);
    std::istringstream bad_value("lda.topics = banana\n");
    REQUIRE_THROWS_AS(parse_config(bad_value), ConfigError);
    std::istringstream bad_line("lda.topics\n");
    REQUIRE_THROWS_AS(parse_config(bad_line), ConfigError);
    std::istringstream bad_enum("corpus.granularity = paragraph\n");
    REQUIRE_THROWS_AS(parse_config(bad_enum), ConfigError);
    std::istringstream bad_cohort("synth.cohorts = alien:5\n");
    REQUIRE_THROWS_AS(parse_config(bad_cohort), ConfigError);
}

TEST_CASE("validation rejects out-of-range settings") {
    PipelineConfig cfg;
    cfg.lda.topics = 0;
    REQUIRE_THROWS_AS(validate(cfg), ConfigError);
    cfg = PipelineConfig{};
    cfg.split.train_fraction = 1.0;
    REQUIRE_THROWS_AS(validate(cfg), ConfigError);
    cfg = PipelineConfig{};
    cfg.agent.gamma = 1.0;
    REQUIRE_THROWS_AS(validate(cfg), ConfigError);
    cfg = PipelineConfig{};
    cfg.session.max_gap_seconds = 0;
    REQUIRE_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("environment variables override file values") {
    REQUIRE(env_name_for("lda.topics") == "NOVELTY_LDA_TOPICS");
    REQUIRE(env_name_for("session.max_gap_seconds") == "NOVELTY_SESSION_MAX_GAP_SECONDS");

    ::setenv("NOVELTY_LDA_TOPICS", "11", 1);
    ::setenv("NOVELTY_PATHS_OUTPUT", "env_out", 1);
    PipelineConfig cfg;
    apply_env_overrides(cfg);
    ::unsetenv("NOVELTY_LDA_TOPICS");
    ::unsetenv("NOVELTY_PATHS_OUTPUT");
    REQUIRE(cfg.lda.topics == 11);
    REQUIRE(cfg.paths.output == "env_out");
}
