#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "novelty/pipeline.hpp"

// Pipeline driver. Every stage is a subcommand over a shared config file;
// flags mirror config keys through repeatable --set key=value overrides.
// Precedence: built-in defaults < config file < NOVELTY_* environment
// variables < --set.

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    bool force = false;
    int threads = 0;  // 0: keep configured value
    bool strict = false;
};

novelty::PipelineConfig effective_config(const CommonOpts& opts) {
    novelty::PipelineConfig cfg;
    if (!opts.config_path.empty()) cfg = novelty::load_config(opts.config_path);
    novelty::apply_env_overrides(cfg);
    for (const auto& entry : opts.overrides) {
        auto eq = entry.find('=');
        if (eq == std::string::npos)
            throw novelty::ConfigError("--set expects key=value, got '" + entry + "'");
        novelty::config_apply(cfg, entry.substr(0, eq), entry.substr(eq + 1));
    }
    if (opts.threads > 0) cfg.threads = opts.threads;
    novelty::validate(cfg);
    return cfg;
}

void print_summary(const novelty::json& summary) {
    for (auto it = summary.begin(); it != summary.end(); ++it) {
        if (it.key() == "stages" || it.key() == "users" || it.key() == "groups") continue;
        std::cout << "  " << it.key() << ": "
                  << (it->is_string() ? it->get<std::string>() : it->dump()) << "\n";
    }
    std::cout << summary.dump() << std::endl;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "Config file (key = value lines)");
    cmd->add_option("-s,--set", opts.overrides, "Override a config key, e.g. --set lda.topics=10");
    cmd->add_flag("-f,--force", opts.force, "Accept stale upstream artifacts");
    cmd->add_option("-t,--threads", opts.threads, "Worker thread cap");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"novelty: taste discovery, novelty-policy learning and churn reporting"};
    app.require_subcommand(1);

    CommonOpts opts;
    using Runner = novelty::json (*)(const novelty::PipelineConfig&, bool);
    struct Sub {
        const char* name;
        const char* help;
        Runner runner;
    };
    const std::vector<Sub> subs = {
        {"sessionize", "Split the event cache into temporal sessions",
         novelty::pipeline::run_sessionize},
        {"train-lda", "Discover the shared taste pool by collapsed Gibbs sampling",
         novelty::pipeline::run_train_lda},
        {"select-model", "Perplexity grid search over taste counts and iterations",
         novelty::pipeline::run_select_model},
        {"assign", "Map each user's sessions into taste space", novelty::pipeline::run_assign},
        {"train-policy", "Learn per-user novelty policies by Q-learning",
         novelty::pipeline::run_train_policy},
        {"evaluate", "Score policies on held-out sessions against the majority baseline",
         novelty::pipeline::run_evaluate},
        {"vop", "Cross-policy F1 matrix and per-user personalization gain",
         novelty::pipeline::run_vop},
        {"churn-report", "Taste-profile similarity and quitting-user analysis",
         novelty::pipeline::run_churn_report},
        {"run-all", "Run the whole pipeline in order", novelty::pipeline::run_all},
    };

    std::vector<std::pair<CLI::App*, Runner>> wired;
    CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic event log with ground truth");
    add_common(synth_cmd, opts);
    CLI::App* ingest_cmd = app.add_subcommand("ingest", "Parse and index a TSV event log");
    add_common(ingest_cmd, opts);
    ingest_cmd->add_flag("--strict", opts.strict, "Abort on the first malformed line");
    for (const auto& sub : subs) {
        CLI::App* cmd = app.add_subcommand(sub.name, sub.help);
        add_common(cmd, opts);
        wired.emplace_back(cmd, sub.runner);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        novelty::PipelineConfig cfg = effective_config(opts);
        novelty::json summary;
        if (synth_cmd->parsed()) {
            summary = novelty::pipeline::run_synth(cfg);
        } else if (ingest_cmd->parsed()) {
            summary = novelty::pipeline::run_ingest(
                cfg, opts.force,
                opts.strict ? novelty::ParseStrictness::Strict
                            : novelty::ParseStrictness::Lenient);
        } else {
            for (const auto& [cmd, runner] : wired) {
                if (cmd->parsed()) {
                    summary = runner(cfg, opts.force);
                    break;
                }
            }
        }
        print_summary(summary);
        return 0;
    } catch (const novelty::ConfigError& e) {
        std::cerr << "error [config]: " << e.what() << std::endl;
        return 2;
    } catch (const novelty::MissingArtifact& e) {
        std::cerr << "error [missing-artifact]: " << e.what() << std::endl;
        return 3;
    } catch (const novelty::StaleArtifact& e) {
        std::cerr << "error [stale-artifact]: " << e.what() << std::endl;
        return 4;
    } catch (const novelty::Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
}
