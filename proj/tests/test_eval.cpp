#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "novelty/eval.hpp"

using namespace novelty;

namespace {

std::vector<AgentAction> actions(std::initializer_list<int> xs) {
    std::vector<AgentAction> out;
    for (int x : xs) out.push_back(x ? AgentAction::Novel : AgentAction::Familiar);
    return out;
}

Policy constant_policy(const std::string& user, PolicyAction action, int num_states) {
    Policy p;
    p.user_id = user;
    p.actions.assign(static_cast<std::size_t>(num_states), action);
    p.majority_train =
        action == PolicyAction::Novel ? AgentAction::Novel : AgentAction::Familiar;
    return p;
}

std::vector<Episode> constant_episodes(AgentAction observed, int n, int num_states) {
    std::vector<Episode> out;
    for (int i = 0; i < n; ++i) {
        int s = i % num_states;
        int next = observed == AgentAction::Novel ? (s + 1) % num_states : s;
        out.push_back({s, observed, next});
    }
    return out;
}

}  // namespace

TEST_CASE("metric formulas on a hand-checked confusion") {
    Confusion c{2, 1, 1, 6};
    REQUIRE(precision_of(c) == 2.0 / 3.0);
    REQUIRE(recall_of(c) == 2.0 / 3.0);
    REQUIRE_THAT(f1_of(c), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
    REQUIRE(accuracy_of(c) == 0.8);
    REQUIRE(c.total() == 10);
}

TEST_CASE("all-correct predictions score 1") {
    auto r = score_predictions(actions({1, 0, 1, 0}), actions({1, 0, 1, 0}));
    REQUIRE(r.f1 == 1.0);
    REQUIRE(r.accuracy == 1.0);
    REQUIRE(r.confusion == Confusion{2, 0, 0, 2});
}

TEST_CASE("zero denominators resolve to zero by convention") {
    // no positive predictions and no positive labels
    auto r = score_predictions(actions({0, 0, 0}), actions({0, 0, 0}));
    REQUIRE(r.precision == 0.0);
    REQUIRE(r.recall == 0.0);
    REQUIRE(r.f1 == 0.0);
    REQUIRE(r.accuracy == 1.0);
}

TEST_CASE("score matches a brute-force recount on random inputs") {
    std::mt19937_64 rng(71);
    for (int round = 0; round < 200; ++round) {
        std::size_t n = 1 + rng() % 50;
        std::vector<AgentAction> pred(n), obs(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = rng() % 2 ? AgentAction::Novel : AgentAction::Familiar;
            obs[i] = rng() % 2 ? AgentAction::Novel : AgentAction::Familiar;
        }
        auto r = score_predictions(pred, obs);

        // independent recount
        std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (pred[i] == AgentAction::Novel) {
                if (obs[i] == AgentAction::Novel) ++tp;
                else ++fp;
            } else {
                if (obs[i] == AgentAction::Novel) ++fn;
                else ++tn;
            }
        }
        REQUIRE(r.confusion == Confusion{tp, fp, fn, tn});
        REQUIRE(r.confusion.total() == static_cast<std::int64_t>(n));
        REQUIRE((r.f1 >= 0.0 && r.f1 <= 1.0));
        REQUIRE((r.accuracy >= 0.0 && r.accuracy <= 1.0));
    }
}

TEST_CASE("score drives predictions through the policy") {
    Policy policy = constant_policy("u0", PolicyAction::Novel, 2);
    policy.actions[1] = PolicyAction::Unvisited;
    std::vector<Episode> heldout = {{0, AgentAction::Novel, 1},
                                    {1, AgentAction::Familiar, 1},
                                    {1, AgentAction::Novel, 0}};
    // state 1 is unvisited; MajorityTrain fallback (Novel) predicts Novel there
    auto r = score(policy, heldout, PredictFallback::MajorityTrain);
    REQUIRE(r.confusion == Confusion{2, 1, 0, 0});
    // Familiar fallback flips the unvisited predictions
    auto r2 = score(policy, heldout, PredictFallback::Familiar);
    REQUIRE(r2.confusion == Confusion{1, 0, 1, 1});
    REQUIRE_THROWS_AS(score(policy, {}, PredictFallback::Familiar), NoHeldout);
}

TEST_CASE("majority baseline") {
    SECTION("majority-Familiar training on all-Familiar heldout: perfect accuracy, zero F1") {
        std::vector<Episode> train;
        for (int i = 0; i < 9; ++i) train.push_back({0, AgentAction::Familiar, 0});
        train.push_back({0, AgentAction::Novel, 1});
        auto heldout = constant_episodes(AgentAction::Familiar, 10, 2);
        auto r = majority_baseline(train, heldout);
        REQUIRE(r.accuracy == 1.0);
        REQUIRE(r.f1 == 0.0);
    }
    SECTION("majority-Novel training on a balanced heldout: coin-flip accuracy") {
        auto train = constant_episodes(AgentAction::Novel, 10, 2);
        std::vector<Episode> heldout;
        for (int i = 0; i < 5; ++i) {
            heldout.push_back({0, AgentAction::Novel, 1});
            heldout.push_back({1, AgentAction::Familiar, 1});
        }
        auto r = majority_baseline(train, heldout);
        REQUIRE(r.accuracy == 0.5);
    }
    SECTION("a single-class user: the baseline ties a policy that learned that class") {
        auto train = constant_episodes(AgentAction::Familiar, 20, 3);
        auto heldout = constant_episodes(AgentAction::Familiar, 10, 3);
        Policy learned = constant_policy("u0", PolicyAction::Familiar, 3);
        learned.majority_train = AgentAction::Familiar;
        auto base = majority_baseline(train, heldout);
        auto own = score(learned, heldout);
        REQUIRE(base.accuracy == own.accuracy);
        REQUIRE(base.f1 == own.f1);
    }
    SECTION("ties in training go to Familiar") {
        std::vector<Episode> train = {{0, AgentAction::Novel, 1}, {1, AgentAction::Familiar, 1}};
        auto heldout = constant_episodes(AgentAction::Familiar, 4, 2);
        REQUIRE(majority_baseline(train, heldout).accuracy == 1.0);
    }
}

TEST_CASE("identical policies give zero personalization gain") {
    std::vector<UserEvalData> users;
    for (int i = 0; i < 4; ++i) {
        UserEvalData u;
        u.user_id = "u" + std::to_string(i);
        u.policy = constant_policy(u.user_id, PolicyAction::Novel, 3);
        u.heldout = constant_episodes(AgentAction::Novel, 12, 3);
        users.push_back(std::move(u));
    }
    auto vop = value_of_personalization(users);
    for (double d : vop.delta) REQUIRE_THAT(d, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("opposite deterministic behaviors give maximal gain to both users") {
    // Hand enumeration. User A always switches, user B always stays.
    //   A's own policy predicts Novel everywhere          -> F1(A,A) = 1.
    //   B's policy on A's data predicts Familiar          -> tp=0 -> F1(A,B) = 0.
    //   B's own policy predicts Familiar, all correct with no novelty events
    //   anywhere                                          -> vacuously perfect, F1(B,B) = 1.
    //   A's policy on B's data predicts Novel, all wrong  -> F1(B,A) = 0.
    // So delta = 1 for both.
    UserEvalData a{"A", constant_policy("A", PolicyAction::Novel, 2),
                   constant_episodes(AgentAction::Novel, 10, 2)};
    UserEvalData b{"B", constant_policy("B", PolicyAction::Familiar, 2),
                   constant_episodes(AgentAction::Familiar, 10, 2)};
    auto vop = value_of_personalization(std::vector<UserEvalData>{a, b});
    REQUIRE(vop.f1[0][0] == 1.0);
    REQUIRE(vop.f1[0][1] == 0.0);
    REQUIRE(vop.f1[1][1] == 1.0);
    REQUIRE(vop.f1[1][0] == 0.0);
    REQUIRE(vop.delta == std::vector<double>{1.0, 1.0});
}

TEST_CASE("vop diagonal equals independently computed self scores") {
    std::mt19937_64 rng(73);
    std::vector<UserEvalData> users;
    for (int i = 0; i < 5; ++i) {
        UserEvalData u;
        u.user_id = "u" + std::to_string(i);
        u.policy.user_id = u.user_id;
        u.policy.actions.resize(3);
        for (auto& action : u.policy.actions)
            action = rng() % 2 ? PolicyAction::Novel : PolicyAction::Familiar;
        u.policy.majority_train = rng() % 2 ? AgentAction::Novel : AgentAction::Familiar;
        for (int e = 0; e < 20; ++e) {
            int s = static_cast<int>(rng() % 3);
            AgentAction obs = rng() % 2 ? AgentAction::Novel : AgentAction::Familiar;
            u.heldout.push_back({s, obs, obs == AgentAction::Novel ? (s + 1) % 3 : s});
        }
        users.push_back(std::move(u));
    }
    auto vop = value_of_personalization(users);
    for (std::size_t i = 0; i < users.size(); ++i) {
        auto self = score(users[i].policy, users[i].heldout, PredictFallback::MajorityTrain);
        // mixed-label held-out sets: the matrix and score() agree exactly
        REQUIRE(vop.f1[i][i] == self.f1);
    }
}

TEST_CASE("vop requires at least two users with held-out data") {
    std::vector<UserEvalData> one;
    one.push_back({"u0", constant_policy("u0", PolicyAction::Novel, 2),
                   constant_episodes(AgentAction::Novel, 5, 2)});
    REQUIRE_THROWS_AS(value_of_personalization(one), TooFewUsers);
    one.push_back({"u1", constant_policy("u1", PolicyAction::Novel, 2), {}});
    REQUIRE_THROWS_AS(value_of_personalization(one), NoHeldout);
}
