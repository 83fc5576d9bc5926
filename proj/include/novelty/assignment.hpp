#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "novelty/common.hpp"
#include "novelty/lda.hpp"
#include "novelty/sessions.hpp"

namespace novelty {

// Floor applied to zero taste-track entries so a single unlucky token cannot
// drive a whole session's log posterior to -inf.
inline constexpr double kTrackProbabilityFloor = 1e-9;

struct SessionPosterior {
    std::vector<double> probabilities;  // sums to 1
    std::size_t tokens_used = 0;
    std::size_t tokens_out_of_vocab = 0;
    bool all_out_of_vocab = false;  // posterior fell back to the prior
};

// Posterior over tastes for one session: P(k | h) proportional to
// P(k) * prod_i P(s_i | k), computed in log space and normalized over k.
// P(k) is the user's taste proportion; unseen users get the uniform prior.
// Out-of-vocabulary tokens are skipped; if every token is out of vocabulary
// the posterior equals the prior and the flag is set.
inline SessionPosterior session_posterior(const TasteModel& model, std::string_view user_id,
                                          std::span<const int> tokens) {
    if (tokens.empty()) throw EmptySession("session has no tokens");
    const int K = model.num_tastes;
    const std::size_t k_count = static_cast<std::size_t>(K);

    std::vector<double> prior;
    int row = model.user_row(user_id);
    if (row >= 0) {
        prior = model.user_taste[static_cast<std::size_t>(row)];
    } else {
        prior.assign(k_count, 1.0 / K);
    }

    std::vector<double> log_scores(k_count);
    for (std::size_t k = 0; k < k_count; ++k)
        log_scores[k] = prior[k] > 0.0 ? std::log(prior[k])
                                       : -std::numeric_limits<double>::infinity();

    SessionPosterior out;
    for (int token : tokens) {
        if (token < 0 || token >= model.vocab_size) {
            ++out.tokens_out_of_vocab;
            continue;
        }
        ++out.tokens_used;
        for (std::size_t k = 0; k < k_count; ++k) {
            double p = model.taste_track[k][static_cast<std::size_t>(token)];
            log_scores[k] += std::log(p > 0.0 ? p : kTrackProbabilityFloor);
        }
    }
    if (out.tokens_used == 0) {
        out.all_out_of_vocab = true;
        out.probabilities = std::move(prior);
        return out;
    }
    out.probabilities = posterior_from_log_scores(log_scores);
    return out;
}

// Argmax taste; ties break to the lowest index.
inline int assign_taste(std::span<const double> posterior) {
    if (posterior.empty()) throw EmptySession("empty posterior");
    std::size_t best = 0;
    for (std::size_t k = 1; k < posterior.size(); ++k)
        if (posterior[k] > posterior[best]) best = k;
    return static_cast<int>(best);
}

struct TrajectoryStep {
    int session_index = 0;
    std::vector<double> posterior;
    int assigned_taste = 0;
    bool all_out_of_vocab = false;
};

// A user's session stream mapped into taste space, in session time order.
struct TasteTrajectory {
    std::string user_id;
    std::vector<TrajectoryStep> steps;
};

inline TasteTrajectory build_trajectory(const TasteModel& model,
                                        std::span<const Session> sessions) {
    if (sessions.empty()) throw EmptySession("no sessions to build a trajectory from");
    TasteTrajectory traj;
    traj.user_id = sessions.front().user_id;
    traj.steps.reserve(sessions.size());
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        auto posterior = session_posterior(model, traj.user_id, sessions[i].tokens);
        TrajectoryStep step;
        step.session_index = static_cast<int>(i);
        step.assigned_taste = assign_taste(posterior.probabilities);
        step.posterior = std::move(posterior.probabilities);
        step.all_out_of_vocab = posterior.all_out_of_vocab;
        traj.steps.push_back(std::move(step));
    }
    return traj;
}

}  // namespace novelty
