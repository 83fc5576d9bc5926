#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "novelty/assignment.hpp"
#include "novelty/common.hpp"

namespace novelty {

// The agent's two actions: seek a new taste or stay with the current one.
enum class AgentAction : int { Novel = 0, Familiar = 1 };

inline const char* to_string(AgentAction a) {
    return a == AgentAction::Novel ? "novel" : "familiar";
}

// One observed taste transition. The observed action is Novel exactly when
// the next assigned taste differs from the current one.
struct Episode {
    int state = 0;
    AgentAction observed = AgentAction::Familiar;
    int next_state = 0;

    bool operator==(const Episode&) const = default;
};

inline std::vector<Episode> label_transitions(const TasteTrajectory& traj) {
    if (traj.steps.size() < 2)
        throw TrajectoryTooShort("trajectory for " + traj.user_id + " has " +
                                 std::to_string(traj.steps.size()) + " steps, needs 2");
    std::vector<Episode> episodes;
    episodes.reserve(traj.steps.size() - 1);
    for (std::size_t i = 0; i + 1 < traj.steps.size(); ++i) {
        int cur = traj.steps[i].assigned_taste;
        int next = traj.steps[i + 1].assigned_taste;
        episodes.push_back(
            {cur, next != cur ? AgentAction::Novel : AgentAction::Familiar, next});
    }
    return episodes;
}

struct AgentParams {
    double gamma = 0.9;            // discount factor
    double lr_exponent = 0.65;     // learning rate 1 / t^lr_exponent
    double epsilon_start = 0.2;    // exploration, decays linearly over max_sweeps
    double epsilon_end = 0.01;
    double reward_correct = 1.0;   // action matches the observed transition
    double reward_wrong = -1.0;
    double action_cost = 0.01;     // charged to Novel
    double convergence_tol = 1e-4;
    int max_sweeps = 10000;
    // What t counts in 1 / t^lr_exponent. The default clocks each (state,
    // action) entry by its own update count, which is what polynomial-rate
    // convergence results assume; a single global step counter starves
    // entries the replay visits rarely (their rate decays with time they
    // never saw) and can leave them short of any tolerance. The global
    // counter remains available for comparison.
    bool global_step_rate = false;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw BadConfig("gamma must be in [0, 1)");
        if (!(lr_exponent > 0.0)) throw BadConfig("lr_exponent must be positive");
        if (epsilon_end > epsilon_start) throw BadConfig("epsilon_end must be <= epsilon_start");
        if (epsilon_start < 0.0 || epsilon_start > 1.0) throw BadConfig("epsilon out of [0, 1]");
        if (!(reward_wrong <= 0.0 && reward_correct >= 0.0))
            throw BadConfig("need reward_wrong <= 0 <= reward_correct");
        if (reward_correct > 1.0 || reward_wrong < -1.0)
            throw BadConfig("rewards must lie in [-1, 1]");
        if (action_cost < 0.0) throw BadConfig("action_cost must be >= 0");
        if (!(convergence_tol > 0.0)) throw BadConfig("convergence_tol must be positive");
        if (max_sweeps < 1) throw BadConfig("max_sweeps must be >= 1");
    }
};

struct QTable {
    std::string user_id;
    int num_states = 0;
    std::vector<std::array<double, 2>> q;              // state x {Novel, Familiar}
    std::vector<std::array<std::int64_t, 2>> visits;   // update counts per (s, a)
    int sweeps_run = 0;

    bool visited(int state) const {
        const auto& v = visits[static_cast<std::size_t>(state)];
        return v[0] + v[1] > 0;
    }
};

// One application of the Q-learning update:
//   Q(s,a) := Q(s,a) + alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))
inline double q_update(double current, double reward, double best_next, double alpha,
                       double gamma) {
    return current + alpha * (reward + gamma * best_next - current);
}

enum class PolicyAction : int { Novel = 0, Familiar = 1, Unvisited = 2 };

inline const char* to_string(PolicyAction a) {
    switch (a) {
        case PolicyAction::Novel: return "novel";
        case PolicyAction::Familiar: return "familiar";
        default: return "unvisited";
    }
}

struct Policy {
    std::string user_id;
    std::vector<PolicyAction> actions;  // per taste state
    // Majority observed action over the training episodes; the MajorityTrain
    // prediction fallback. Ties settle on Familiar.
    AgentAction majority_train = AgentAction::Familiar;
};

// Per-state argmax of the Q table. Ties settle on Familiar; states never
// updated during training are Unvisited.
inline Policy extract_policy(const QTable& table) {
    Policy policy;
    policy.user_id = table.user_id;
    policy.actions.resize(static_cast<std::size_t>(table.num_states), PolicyAction::Unvisited);
    for (int s = 0; s < table.num_states; ++s) {
        if (!table.visited(s)) continue;
        const auto& q = table.q[static_cast<std::size_t>(s)];
        policy.actions[static_cast<std::size_t>(s)] =
            q[0] > q[1] ? PolicyAction::Novel : PolicyAction::Familiar;
    }
    return policy;
}

enum class PredictFallback { Familiar, MajorityTrain };

inline AgentAction predict(const Policy& policy, int state,
                           PredictFallback fallback = PredictFallback::MajorityTrain) {
    if (state >= 0 && state < static_cast<int>(policy.actions.size())) {
        PolicyAction a = policy.actions[static_cast<std::size_t>(state)];
        if (a == PolicyAction::Novel) return AgentAction::Novel;
        if (a == PolicyAction::Familiar) return AgentAction::Familiar;
    }
    return fallback == PredictFallback::Familiar ? AgentAction::Familiar : policy.majority_train;
}

inline AgentAction majority_action(std::span<const Episode> episodes) {
    std::int64_t novel = 0;
    for (const auto& ep : episodes)
        if (ep.observed == AgentAction::Novel) ++novel;
    return novel * 2 > static_cast<std::int64_t>(episodes.size()) ? AgentAction::Novel
                                                                  : AgentAction::Familiar;
}

struct PolicyTrainResult {
    QTable table;
    Policy policy;
    bool converged = false;
    std::vector<double> sweep_max_delta;  // convergence trace, one entry per sweep
};

// Replays the user's training episodes in temporal order, sweep after sweep,
// until the largest Q change in a full sweep drops below convergence_tol or
// max_sweeps is reached. Per step the agent picks an action epsilon-greedily,
// earns reward_correct/reward_wrong for matching the observed transition
// (minus the action cost when it chose Novel), and updates Q with learning
// rate 1 / t^lr_exponent, t per AgentParams::global_step_rate. Deterministic
// given the seed. Non-convergence is reported in the result, never thrown.
inline PolicyTrainResult train_policy(std::span<const Episode> episodes, int num_states,
                                      const AgentParams& params, std::string user_id = {}) {
    if (episodes.empty()) throw NoEpisodes("no training episodes");
    if (num_states < 1) throw BadConfig("num_states must be >= 1");
    params.validate();
    for (const auto& ep : episodes) {
        if (ep.state < 0 || ep.state >= num_states || ep.next_state < 0 ||
            ep.next_state >= num_states)
            throw BadConfig("episode state out of range");
    }

    PolicyTrainResult result;
    QTable& table = result.table;
    table.user_id = user_id;
    table.num_states = num_states;
    table.q.assign(static_cast<std::size_t>(num_states), {0.0, 0.0});
    table.visits.assign(static_cast<std::size_t>(num_states), {0, 0});

    std::mt19937_64 rng(params.seed);
    std::uint64_t step = 0;
    for (int sweep = 0; sweep < params.max_sweeps; ++sweep) {
        double epsilon = params.epsilon_start;
        if (params.max_sweeps > 1)
            epsilon += (params.epsilon_end - params.epsilon_start) *
                       (static_cast<double>(sweep) / (params.max_sweeps - 1));
        double max_delta = 0.0;
        for (const auto& ep : episodes) {
            ++step;
            auto& q_state = table.q[static_cast<std::size_t>(ep.state)];
            AgentAction greedy = q_state[0] > q_state[1] ? AgentAction::Novel
                                                         : AgentAction::Familiar;
            AgentAction action = greedy;
            if (uniform01(rng) < epsilon)
                action = uniform01(rng) < 0.5 ? AgentAction::Novel : AgentAction::Familiar;

            double reward = action == ep.observed ? params.reward_correct : params.reward_wrong;
            if (action == AgentAction::Novel) reward -= params.action_cost;

            auto& visit =
                table.visits[static_cast<std::size_t>(ep.state)][static_cast<std::size_t>(action)];
            ++visit;
            const double t = params.global_step_rate ? static_cast<double>(step)
                                                     : static_cast<double>(visit);
            const double alpha = 1.0 / std::pow(t, params.lr_exponent);

            const auto& q_next = table.q[static_cast<std::size_t>(ep.next_state)];
            double best_next = std::max(q_next[0], q_next[1]);
            double& entry = q_state[static_cast<std::size_t>(action)];
            double updated = q_update(entry, reward, best_next, alpha, params.gamma);
            max_delta = std::max(max_delta, std::abs(updated - entry));
            entry = updated;
        }
        table.sweeps_run = sweep + 1;
        result.sweep_max_delta.push_back(max_delta);
        if (max_delta < params.convergence_tol) {
            result.converged = true;
            break;
        }
    }

    result.policy = extract_policy(table);
    result.policy.majority_train = majority_action(episodes);
    return result;
}

}  // namespace novelty
