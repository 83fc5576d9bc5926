#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "novelty/agent.hpp"
#include "novelty/common.hpp"

namespace novelty {

// Confusion counts with Novel as the positive class.
struct Confusion {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;

    std::int64_t total() const { return tp + fp + fn + tn; }
    Confusion& operator+=(const Confusion& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
    bool operator==(const Confusion&) const = default;
};

inline Confusion count_confusion(std::span<const AgentAction> predicted,
                                 std::span<const AgentAction> observed) {
    if (predicted.size() != observed.size())
        throw BadConfig("prediction/label length mismatch");
    Confusion c;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        bool pred_novel = predicted[i] == AgentAction::Novel;
        bool obs_novel = observed[i] == AgentAction::Novel;
        if (pred_novel && obs_novel) ++c.tp;
        else if (pred_novel && !obs_novel) ++c.fp;
        else if (!pred_novel && obs_novel) ++c.fn;
        else ++c.tn;
    }
    return c;
}

// P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R), each defined as 0 when its
// denominator is 0.
inline double precision_of(const Confusion& c) {
    return c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
}
inline double recall_of(const Confusion& c) {
    return c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
}
inline double f1_of(const Confusion& c) {
    double p = precision_of(c), r = recall_of(c);
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}
inline double accuracy_of(const Confusion& c) {
    return c.total() > 0 ? static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()) : 0.0;
}

struct ScoreResult {
    Confusion confusion;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
};

inline ScoreResult score_predictions(std::span<const AgentAction> predicted,
                                     std::span<const AgentAction> observed) {
    ScoreResult r;
    r.confusion = count_confusion(predicted, observed);
    r.precision = precision_of(r.confusion);
    r.recall = recall_of(r.confusion);
    r.f1 = f1_of(r.confusion);
    r.accuracy = accuracy_of(r.confusion);
    return r;
}

// Scores a policy's predictions on held-out episodes.
inline ScoreResult score(const Policy& policy, std::span<const Episode> heldout,
                         PredictFallback fallback = PredictFallback::MajorityTrain) {
    if (heldout.empty()) throw NoHeldout("no held-out episodes");
    std::vector<AgentAction> predicted, observed;
    predicted.reserve(heldout.size());
    observed.reserve(heldout.size());
    for (const auto& ep : heldout) {
        predicted.push_back(predict(policy, ep.state, fallback));
        observed.push_back(ep.observed);
    }
    return score_predictions(predicted, observed);
}

// Predicts the user's majority training action for every held-out episode.
// Stands in for an external-learner comparison.
inline ScoreResult majority_baseline(std::span<const Episode> train,
                                     std::span<const Episode> heldout) {
    if (train.empty()) throw NoEpisodes("no training episodes for the baseline");
    if (heldout.empty()) throw NoHeldout("no held-out episodes");
    AgentAction constant = majority_action(train);
    std::vector<AgentAction> predicted(heldout.size(), constant);
    std::vector<AgentAction> observed;
    observed.reserve(heldout.size());
    for (const auto& ep : heldout) observed.push_back(ep.observed);
    return score_predictions(predicted, observed);
}

struct UserEvalData {
    std::string user_id;
    Policy policy;
    std::vector<Episode> heldout;
};

// Cross-policy F1 matrix plus the per-user personalization gain
// delta_i = f1[i][i] - mean over j != i of f1[i][j] (positive means the
// user's own policy wins).
struct VopMatrix {
    std::vector<std::string> users;
    std::vector<std::vector<double>> f1;  // f1[i][j]: user i's data, user j's policy
    std::vector<double> delta;
};

// F1 as used inside the cross-policy matrix. A policy that correctly
// predicts every transition of a user whose held-out window contains no
// novelty events has tp = fp = fn = 0; the matrix scores that vacuously
// perfect case as 1 so that identical behavior yields a zero gain and
// disagreement a positive one. score() keeps the plain zero-denominator
// convention; only the matrix uses this rule.
inline double vop_f1(const Confusion& c) {
    if (c.tp == 0 && c.fp == 0 && c.fn == 0) return 1.0;
    return f1_of(c);
}

inline VopMatrix value_of_personalization(std::span<const UserEvalData> users, int threads = 1) {
    if (users.size() < 2) throw TooFewUsers("value of personalization needs >= 2 users");
    for (const auto& u : users)
        if (u.heldout.empty()) throw NoHeldout("user " + u.user_id + " has no held-out episodes");

    const std::size_t m = users.size();
    VopMatrix vop;
    vop.users.reserve(m);
    for (const auto& u : users) vop.users.push_back(u.user_id);
    vop.f1.assign(m, std::vector<double>(m, 0.0));

    parallel_for(m, threads, [&](std::size_t i) {
        std::vector<AgentAction> observed;
        observed.reserve(users[i].heldout.size());
        for (const auto& ep : users[i].heldout) observed.push_back(ep.observed);
        std::vector<AgentAction> predicted(users[i].heldout.size());
        for (std::size_t j = 0; j < m; ++j) {
            // A foreign policy's MajorityTrain is meaningless for user i's
            // data, so cross predictions fall back to Familiar.
            PredictFallback fallback =
                i == j ? PredictFallback::MajorityTrain : PredictFallback::Familiar;
            for (std::size_t e = 0; e < users[i].heldout.size(); ++e)
                predicted[e] = predict(users[j].policy, users[i].heldout[e].state, fallback);
            vop.f1[i][j] = vop_f1(count_confusion(predicted, observed));
        }
    });

    vop.delta.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        double cross = 0.0;
        for (std::size_t j = 0; j < m; ++j)
            if (j != i) cross += vop.f1[i][j];
        vop.delta[i] = vop.f1[i][i] - cross / static_cast<double>(m - 1);
    }
    return vop;
}

}  // namespace novelty
