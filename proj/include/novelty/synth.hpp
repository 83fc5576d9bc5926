#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "novelty/agent.hpp"
#include "novelty/common.hpp"
#include "novelty/events.hpp"
#include "novelty/lda.hpp"
#include "novelty/sessions.hpp"

namespace novelty {

// How planted taste-track rows are separated:
//   Disjoint  - each taste is uniform over its own vocabulary block.
//   Blend     - blend_weight * disjoint + (1 - blend_weight) * uniform; the
//               pairwise total-variation distance between rows is then
//               exactly blend_weight.
//   Dirichlet - rows drawn from a symmetric Dirichlet (overlapping support).
enum class TasteSeparation { Disjoint, Blend, Dirichlet };

// Behavior planted per user.
//   AlwaysNovel    - switches taste every session.
//   AlwaysFamiliar - keeps its initial taste forever.
//   StatePolicy    - a deterministic per-taste action map drives switching.
//   Drifter        - stays with probability p_stay, else switches.
enum class BehaviorArchetype { AlwaysNovel, AlwaysFamiliar, StatePolicy, Drifter };

inline const char* to_string(BehaviorArchetype a) {
    switch (a) {
        case BehaviorArchetype::AlwaysNovel: return "novel";
        case BehaviorArchetype::AlwaysFamiliar: return "familiar";
        case BehaviorArchetype::StatePolicy: return "state";
        default: return "drifter";
    }
}

struct Cohort {
    BehaviorArchetype archetype = BehaviorArchetype::Drifter;
    int count = 0;
    bool quitting = false;  // shapes timestamps into a short, long-gone span
    double p_stay = 0.5;    // Drifter only
    double noise = 0.0;     // probability a step ignores the planted behavior

    bool operator==(const Cohort&) const = default;
};

struct SynthConfig {
    int num_tastes = 5;   // planted K*
    int vocab_size = 200; // planted V
    int sessions_per_user = 200;
    int session_len_min = 10;
    int session_len_max = 30;
    TasteSeparation separation = TasteSeparation::Disjoint;
    double blend_weight = 0.5;           // Blend only
    double dirichlet_concentration = 0.1;
    bool zipf_tokens = false;            // Zipf-weighted token frequencies within a taste
    std::int64_t max_gap_seconds = 3600; // gap structure is built around this
    std::vector<Cohort> cohorts;
    std::uint64_t seed = 1;

    // 40% perpetual switchers, 30% stay-at-homes, 30% state-driven.
    static std::vector<Cohort> default_cohorts(int users) {
        int novel = static_cast<int>(std::nearbyint(users * 0.4));
        int familiar = static_cast<int>(std::nearbyint(users * 0.3));
        int state = users - novel - familiar;
        return {{BehaviorArchetype::AlwaysNovel, novel, false, 0.0, 0.0},
                {BehaviorArchetype::AlwaysFamiliar, familiar, false, 1.0, 0.0},
                {BehaviorArchetype::StatePolicy, state, false, 0.5, 0.0}};
    }

    int total_users() const {
        int n = 0;
        for (const auto& c : cohorts) n += c.count;
        return n;
    }
};

struct PlantedUser {
    std::string user_id;
    BehaviorArchetype archetype = BehaviorArchetype::Drifter;
    double p_stay = 0.5;
    double noise = 0.0;
    bool quitting = false;
    std::optional<std::vector<AgentAction>> policy;  // StatePolicy users
    std::vector<int> taste_chain;                    // planted taste per session
    std::vector<double> mixture;                     // empirical chain frequencies
};

struct GroundTruth {
    int num_tastes = 0;
    int vocab_size = 0;
    std::vector<std::vector<double>> taste_track;  // planted token space
    std::vector<std::string> track_ids;            // planted token -> track id string
    std::vector<PlantedUser> users;
};

struct SynthResult {
    EventLog log;
    GroundTruth truth;
};

namespace detail {

inline std::vector<double> dirichlet_row(std::mt19937_64& rng, int dim, double concentration) {
    std::gamma_distribution<double> gamma(concentration, 1.0);
    std::vector<double> row(static_cast<std::size_t>(dim));
    double total = 0.0;
    for (auto& x : row) {
        x = gamma(rng);
        if (x <= 0.0) x = 1e-300;
        total += x;
    }
    for (auto& x : row) x /= total;
    return row;
}

inline std::vector<std::vector<double>> plant_taste_track(const SynthConfig& cfg,
                                                          std::mt19937_64& rng) {
    const int K = cfg.num_tastes, V = cfg.vocab_size;
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(K),
                                          std::vector<double>(static_cast<std::size_t>(V), 0.0));
    if (cfg.separation == TasteSeparation::Dirichlet) {
        for (auto& row : rows) row = dirichlet_row(rng, V, cfg.dirichlet_concentration);
        return rows;
    }
    const double w = cfg.separation == TasteSeparation::Disjoint ? 1.0 : cfg.blend_weight;
    const int base = V / K;
    for (int k = 0; k < K; ++k) {
        int begin = k * base;
        int end = k + 1 == K ? V : begin + base;  // last block absorbs the remainder
        std::vector<double> support(static_cast<std::size_t>(end - begin));
        double total = 0.0;
        for (std::size_t i = 0; i < support.size(); ++i) {
            support[i] = cfg.zipf_tokens ? 1.0 / static_cast<double>(i + 1) : 1.0;
            total += support[i];
        }
        for (int v = 0; v < V; ++v) {
            double in_support =
                v >= begin && v < end ? support[static_cast<std::size_t>(v - begin)] / total : 0.0;
            rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(v)] =
                w * in_support + (1.0 - w) / V;
        }
    }
    return rows;
}

inline int jump_elsewhere(std::mt19937_64& rng, int current, int num_tastes) {
    int j = uniform_below(rng, num_tastes - 1);
    return j >= current ? j + 1 : j;
}

}  // namespace detail

// Generates an event log with planted ground truth: shared taste-track rows,
// per-user taste chains driven by planted behavior, and timestamps whose gap
// structure survives sessionize() at the configured max_gap exactly
// (intra-session gaps far below it, inter-session gaps far above).
// Deterministic given the seed; each user draws from a derived stream.
inline SynthResult generate(const SynthConfig& config) {
    SynthConfig cfg = config;
    if (cfg.cohorts.empty()) cfg.cohorts = SynthConfig::default_cohorts(50);
    if (cfg.num_tastes < 2) throw BadConfig("num_tastes must be >= 2");
    if (cfg.vocab_size < cfg.num_tastes) throw BadConfig("vocab_size must be >= num_tastes");
    if (cfg.sessions_per_user < 1) throw BadConfig("sessions_per_user must be >= 1");
    if (cfg.session_len_min < 1 || cfg.session_len_max < cfg.session_len_min)
        throw BadConfig("bad session length range");
    if (cfg.max_gap_seconds < 4) throw BadConfig("max_gap_seconds too small");
    if (cfg.total_users() < 1) throw BadConfig("no users configured");
    for (const auto& c : cfg.cohorts) {
        if (c.count < 0) throw BadConfig("negative cohort count");
        if (c.p_stay < 0.0 || c.p_stay > 1.0) throw BadConfig("p_stay must be in [0, 1]");
        if (c.noise < 0.0 || c.noise > 1.0) throw BadConfig("noise must be in [0, 1]");
    }

    SynthResult result;
    GroundTruth& truth = result.truth;
    truth.num_tastes = cfg.num_tastes;
    truth.vocab_size = cfg.vocab_size;

    std::mt19937_64 model_rng(mix_seed(cfg.seed, 0x7a57e));
    truth.taste_track = detail::plant_taste_track(cfg, model_rng);
    truth.track_ids.reserve(static_cast<std::size_t>(cfg.vocab_size));
    for (int v = 0; v < cfg.vocab_size; ++v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "tmb-%05d", v);
        truth.track_ids.emplace_back(buf);
    }

    // Timestamp layout. Continuing users spread sessions over ~46 months from
    // the base instant; quitting users compress theirs into ~10 months and
    // then vanish, which leaves them a year-plus of silence before the
    // dataset ends.
    const std::int64_t base_ts = 1104537600;  // 2005-01-01T00:00:00Z
    const std::int64_t continuing_span = 1400 * std::int64_t{86400};
    const std::int64_t quitting_span = 300 * std::int64_t{86400};
    const std::int64_t intra_gap = std::max<std::int64_t>(1, cfg.max_gap_seconds / 20);
    const std::int64_t session_span = intra_gap * (cfg.session_len_max - 1);

    std::vector<Event> events;
    int user_index = 0;
    for (const auto& cohort : cfg.cohorts) {
        for (int c = 0; c < cohort.count; ++c, ++user_index) {
            std::mt19937_64 rng(mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(user_index)));
            PlantedUser user;
            char name[32];
            std::snprintf(name, sizeof(name), "user_%04d", user_index);
            user.user_id = name;
            user.archetype = cohort.archetype;
            user.p_stay = cohort.p_stay;
            user.noise = cohort.noise;
            user.quitting = cohort.quitting;
            if (cohort.archetype == BehaviorArchetype::StatePolicy) {
                std::vector<AgentAction> policy(static_cast<std::size_t>(cfg.num_tastes));
                for (auto& a : policy)
                    a = uniform01(rng) < 0.5 ? AgentAction::Novel : AgentAction::Familiar;
                user.policy = std::move(policy);
            }

            // Planted taste chain.
            user.taste_chain.resize(static_cast<std::size_t>(cfg.sessions_per_user));
            int current = uniform_below(rng, cfg.num_tastes);
            user.taste_chain[0] = current;
            for (int s = 1; s < cfg.sessions_per_user; ++s) {
                bool stay;
                switch (cohort.archetype) {
                    case BehaviorArchetype::AlwaysNovel: stay = false; break;
                    case BehaviorArchetype::AlwaysFamiliar: stay = true; break;
                    case BehaviorArchetype::StatePolicy:
                        stay = (*user.policy)[static_cast<std::size_t>(current)] ==
                               AgentAction::Familiar;
                        break;
                    default: stay = uniform01(rng) < cohort.p_stay; break;
                }
                if (cohort.noise > 0.0 && uniform01(rng) < cohort.noise) stay = !stay;
                if (!stay) current = detail::jump_elsewhere(rng, current, cfg.num_tastes);
                user.taste_chain[static_cast<std::size_t>(s)] = current;
            }
            user.mixture.assign(static_cast<std::size_t>(cfg.num_tastes), 0.0);
            for (int k : user.taste_chain) user.mixture[static_cast<std::size_t>(k)] += 1.0;
            for (auto& p : user.mixture) p /= static_cast<double>(cfg.sessions_per_user);

            const std::int64_t span = cohort.quitting ? quitting_span : continuing_span;
            std::int64_t stride = span / cfg.sessions_per_user;
            const std::int64_t min_stride = 4 * cfg.max_gap_seconds + session_span;
            if (stride < min_stride) {
                if (cohort.quitting)
                    throw BadConfig("quitting span cannot hold this many sessions at this gap");
                stride = min_stride;
            }

            for (int s = 0; s < cfg.sessions_per_user; ++s) {
                int taste = user.taste_chain[static_cast<std::size_t>(s)];
                const auto& row = truth.taste_track[static_cast<std::size_t>(taste)];
                int len = cfg.session_len_min +
                          uniform_below(rng, cfg.session_len_max - cfg.session_len_min + 1);
                std::int64_t start = base_ts + static_cast<std::int64_t>(s) * stride;
                for (int i = 0; i < len; ++i) {
                    int token = sample_categorical(rng, row);
                    Event ev;
                    ev.user_id = user.user_id;
                    ev.timestamp = start + static_cast<std::int64_t>(i) * intra_gap;
                    char artist[32], track[48];
                    int artist_idx = token % std::max(1, cfg.vocab_size / 8);
                    std::snprintf(artist, sizeof(artist), "amb-%04d", artist_idx);
                    ev.artist_id = artist;
                    std::snprintf(artist, sizeof(artist), "Artist %04d", artist_idx);
                    ev.artist_name = artist;
                    ev.track_id = truth.track_ids[static_cast<std::size_t>(token)];
                    std::snprintf(track, sizeof(track), "Track %05d", token);
                    ev.track_name = track;
                    events.push_back(std::move(ev));
                }
            }
            truth.users.push_back(std::move(user));
        }
    }

    result.log = EventLog::from_events(std::move(events));
    return result;
}

// The planted taste-track matrix re-indexed into an event log's token space
// (rows renormalized over the tracks that actually appear).
inline std::vector<std::vector<double>> aligned_taste_track(const GroundTruth& truth,
                                                            const EventLog& log) {
    std::vector<std::vector<double>> out(
        static_cast<std::size_t>(truth.num_tastes),
        std::vector<double>(static_cast<std::size_t>(log.vocab_size()), 0.0));
    for (int v = 0; v < truth.vocab_size; ++v) {
        int token = log.token_of(truth.track_ids[static_cast<std::size_t>(v)]);
        if (token < 0) continue;
        for (int k = 0; k < truth.num_tastes; ++k)
            out[static_cast<std::size_t>(k)][static_cast<std::size_t>(token)] =
                truth.taste_track[static_cast<std::size_t>(k)][static_cast<std::size_t>(v)];
    }
    for (auto& row : out) {
        double total = 0.0;
        for (double p : row) total += p;
        if (total > 0.0)
            for (double& p : row) p /= total;
    }
    return out;
}

// A TasteModel whose distributions are the planted ground truth, aligned to
// the log's token space. The independent oracle for taste assignment.
inline TasteModel oracle_model(const GroundTruth& truth, const EventLog& log) {
    TasteModel model;
    model.num_tastes = truth.num_tastes;
    model.vocab_size = log.vocab_size();
    model.taste_track = aligned_taste_track(truth, log);
    for (const auto& user : truth.users) {
        model.users.push_back(user.user_id);
        model.user_taste.push_back(user.mixture);
    }
    model.rebuild_user_index();
    return model;
}

// Samples a bag-of-words corpus directly from a planted taste-track matrix,
// one Dirichlet mixture per document. Used by recovery and perplexity tests
// that do not need the event-log machinery.
inline Corpus sample_corpus(const std::vector<std::vector<double>>& taste_track, int num_docs,
                            int tokens_per_doc, double mixture_concentration, std::uint64_t seed) {
    if (taste_track.empty() || taste_track.front().empty()) throw BadConfig("empty taste_track");
    if (num_docs < 1 || tokens_per_doc < 1) throw BadConfig("bad corpus shape");
    const int K = static_cast<int>(taste_track.size());
    Corpus corpus;
    corpus.vocab_size = static_cast<int>(taste_track.front().size());
    corpus.granularity = Corpus::Granularity::User;
    std::mt19937_64 rng(seed);
    std::gamma_distribution<double> gamma(mixture_concentration, 1.0);
    for (int d = 0; d < num_docs; ++d) {
        std::vector<double> mixture(static_cast<std::size_t>(K));
        double total = 0.0;
        for (auto& x : mixture) {
            x = gamma(rng);
            if (x <= 0.0) x = 1e-300;
            total += x;
        }
        for (auto& x : mixture) x /= total;
        std::map<int, int> bag;
        for (int i = 0; i < tokens_per_doc; ++i) {
            int k = sample_categorical(rng, mixture);
            ++bag[sample_categorical(rng, taste_track[static_cast<std::size_t>(k)])];
        }
        Corpus::Document doc;
        char name[32];
        std::snprintf(name, sizeof(name), "doc_%05d", d);
        doc.user_id = name;
        for (auto [token, count] : bag) {
            doc.counts.emplace_back(token, count);
            doc.total += static_cast<std::size_t>(count);
        }
        corpus.docs.push_back(std::move(doc));
    }
    return corpus;
}

// Best-permutation mean total-variation distance between two row sets with
// the same row count. Exhaustive for K <= 8, greedy beyond.
inline double matched_mean_tv(const std::vector<std::vector<double>>& a,
                              const std::vector<std::vector<double>>& b) {
    const std::size_t k = a.size();
    if (k != b.size()) throw BadConfig("row count mismatch");
    std::vector<std::vector<double>> cost(k, std::vector<double>(k));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) cost[i][j] = total_variation(a[i], b[j]);
    if (k <= 8) {
        std::vector<std::size_t> perm(k);
        for (std::size_t i = 0; i < k; ++i) perm[i] = i;
        double best = std::numeric_limits<double>::infinity();
        do {
            double total = 0.0;
            for (std::size_t i = 0; i < k; ++i) total += cost[i][perm[i]];
            best = std::min(best, total);
        } while (std::next_permutation(perm.begin(), perm.end()));
        return best / static_cast<double>(k);
    }
    std::vector<bool> used(k, false);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t best_j = 0;
        double best_c = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j)
            if (!used[j] && cost[i][j] < best_c) {
                best_c = cost[i][j];
                best_j = j;
            }
        used[best_j] = true;
        total += best_c;
    }
    return total / static_cast<double>(k);
}

}  // namespace novelty
