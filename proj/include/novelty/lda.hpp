#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "novelty/common.hpp"
#include "novelty/sessions.hpp"

namespace novelty {

// The shared taste pool. taste_track[k][s] is the probability of track s
// under taste k; user_taste[m][k] is user m's proportion of taste k. Both are
// row-stochastic.
//
// Naming note: in this library "taste_track" is the per-taste distribution
// over tracks and "user_taste" the per-user mixture; external write-ups of
// similar models sometimes attach the symbols alpha/beta the other way
// around, so everything here is named by role, never by symbol.
struct TasteModel {
    int num_tastes = 0;
    int vocab_size = 0;
    std::vector<std::vector<double>> taste_track;  // K x V
    std::vector<std::vector<double>> user_taste;   // one row per known user
    std::vector<std::string> users;                // row labels for user_taste
    double hyper_doc = 0.0;   // Dirichlet concentration, document-taste prior
    double hyper_word = 0.0;  // Dirichlet concentration, taste-track prior

    struct Meta {
        std::uint64_t seed = 0;
        int iterations = 0;
        double final_log_likelihood = 0.0;
    } meta;

    int user_row(std::string_view user_id) const {
        auto it = user_index_.find(std::string(user_id));
        return it == user_index_.end() ? -1 : it->second;
    }

    void rebuild_user_index() {
        user_index_.clear();
        for (std::size_t i = 0; i < users.size(); ++i)
            user_index_.emplace(users[i], static_cast<int>(i));
    }

private:
    std::unordered_map<std::string, int> user_index_;
};

struct LdaOptions {
    int num_tastes = 20;
    int iterations = 1000;
    double hyper_doc = -1.0;  // <= 0 means the 50/K default
    double hyper_word = 0.01;
    std::uint64_t seed = 1;
};

// Collapsed Gibbs sampler over a bag-of-words corpus. Exposed as a class so
// tests can drive sweeps and audit the count tables; train() below is the
// ordinary entry point.
class GibbsSampler {
public:
    GibbsSampler(const Corpus& corpus, int num_tastes, double hyper_doc, double hyper_word,
                 std::uint64_t seed)
        : corpus_(&corpus),
          num_tastes_(num_tastes),
          vocab_size_(corpus.vocab_size),
          hyper_doc_(hyper_doc),
          hyper_word_(hyper_word),
          rng_(seed) {
        if (num_tastes_ < 1) throw InvalidK("taste count must be >= 1");
        if (corpus.docs.empty()) throw EmptyCorpus("corpus has no documents");
        if (vocab_size_ < 1) throw EmptyCorpus("corpus has an empty vocabulary");

        doc_tokens_.resize(corpus.docs.size());
        for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
            auto& tokens = doc_tokens_[d];
            tokens.reserve(corpus.docs[d].total);
            for (auto [token, count] : corpus.docs[d].counts)
                for (int c = 0; c < count; ++c) tokens.push_back(token);
        }

        doc_taste_.assign(corpus.docs.size(), std::vector<int>(to_size(num_tastes_), 0));
        taste_token_.assign(to_size(num_tastes_), std::vector<int>(to_size(vocab_size_), 0));
        taste_total_.assign(to_size(num_tastes_), 0);
        assignments_.resize(corpus.docs.size());
        weights_.resize(to_size(num_tastes_));

        for (std::size_t d = 0; d < doc_tokens_.size(); ++d) {
            assignments_[d].resize(doc_tokens_[d].size());
            for (std::size_t i = 0; i < doc_tokens_[d].size(); ++i) {
                int k = uniform_below(rng_, num_tastes_);
                assignments_[d][i] = k;
                add_count(d, doc_tokens_[d][i], k, 1);
            }
        }
    }

    void sweep() {
        const double word_norm = hyper_word_ * vocab_size_;
        for (std::size_t d = 0; d < doc_tokens_.size(); ++d) {
            for (std::size_t i = 0; i < doc_tokens_[d].size(); ++i) {
                const int token = doc_tokens_[d][i];
                const int old_k = assignments_[d][i];
                add_count(d, token, old_k, -1);
                for (int k = 0; k < num_tastes_; ++k) {
                    weights_[to_size(k)] =
                        (doc_taste_[d][to_size(k)] + hyper_doc_) *
                        (taste_token_[to_size(k)][to_size(token)] + hyper_word_) /
                        (taste_total_[to_size(k)] + word_norm);
                }
                const int new_k = sample_categorical(rng_, weights_);
                assignments_[d][i] = new_k;
                add_count(d, token, new_k, 1);
            }
        }
        ++sweeps_done_;
    }

    void run(int sweeps) {
        for (int i = 0; i < sweeps; ++i) sweep();
    }

    int sweeps_done() const { return sweeps_done_; }

    // Full recount of the assignment vector against all three count tables.
    bool counts_consistent() const {
        std::vector<std::vector<int>> dt(doc_taste_.size(),
                                         std::vector<int>(to_size(num_tastes_), 0));
        std::vector<std::vector<int>> tt(to_size(num_tastes_),
                                         std::vector<int>(to_size(vocab_size_), 0));
        std::vector<int> tot(to_size(num_tastes_), 0);
        for (std::size_t d = 0; d < doc_tokens_.size(); ++d) {
            for (std::size_t i = 0; i < doc_tokens_[d].size(); ++i) {
                int k = assignments_[d][i];
                ++dt[d][to_size(k)];
                ++tt[to_size(k)][to_size(doc_tokens_[d][i])];
                ++tot[to_size(k)];
            }
        }
        return dt == doc_taste_ && tt == taste_token_ && tot == taste_total_;
    }

    std::vector<std::vector<double>> estimate_taste_track() const {
        const double word_norm = hyper_word_ * vocab_size_;
        std::vector<std::vector<double>> phi(to_size(num_tastes_),
                                             std::vector<double>(to_size(vocab_size_)));
        for (int k = 0; k < num_tastes_; ++k)
            for (int v = 0; v < vocab_size_; ++v)
                phi[to_size(k)][to_size(v)] =
                    (taste_token_[to_size(k)][to_size(v)] + hyper_word_) /
                    (taste_total_[to_size(k)] + word_norm);
        return phi;
    }

    std::vector<std::vector<double>> estimate_doc_taste() const {
        const double doc_norm = hyper_doc_ * num_tastes_;
        std::vector<std::vector<double>> theta(doc_taste_.size(),
                                               std::vector<double>(to_size(num_tastes_)));
        for (std::size_t d = 0; d < doc_taste_.size(); ++d) {
            double total = static_cast<double>(doc_tokens_[d].size());
            for (int k = 0; k < num_tastes_; ++k)
                theta[d][to_size(k)] = (doc_taste_[d][to_size(k)] + hyper_doc_) / (total + doc_norm);
        }
        return theta;
    }

    const std::vector<std::vector<int>>& doc_taste_counts() const { return doc_taste_; }
    const std::vector<std::vector<int>>& taste_token_counts() const { return taste_token_; }
    const std::vector<int>& taste_totals() const { return taste_total_; }

    // Point estimates from the current state, with user_taste rows aggregated
    // over each user's documents (a no-op at user granularity).
    TasteModel finalize(std::uint64_t seed) const {
        TasteModel model;
        model.num_tastes = num_tastes_;
        model.vocab_size = vocab_size_;
        model.hyper_doc = hyper_doc_;
        model.hyper_word = hyper_word_;
        model.taste_track = estimate_taste_track();
        model.meta.seed = seed;
        model.meta.iterations = sweeps_done_;

        std::unordered_map<std::string, std::size_t> row_of;
        std::vector<std::vector<std::int64_t>> counts;
        std::vector<std::int64_t> totals;
        for (std::size_t d = 0; d < corpus_->docs.size(); ++d) {
            const std::string& uid = corpus_->docs[d].user_id;
            auto [it, inserted] = row_of.try_emplace(uid, model.users.size());
            if (inserted) {
                model.users.push_back(uid);
                counts.emplace_back(to_size(num_tastes_), 0);
                totals.push_back(0);
            }
            std::size_t r = it->second;
            for (int k = 0; k < num_tastes_; ++k) counts[r][to_size(k)] += doc_taste_[d][to_size(k)];
            totals[r] += static_cast<std::int64_t>(doc_tokens_[d].size());
        }
        const double doc_norm = hyper_doc_ * num_tastes_;
        model.user_taste.resize(model.users.size());
        for (std::size_t r = 0; r < model.users.size(); ++r) {
            model.user_taste[r].resize(to_size(num_tastes_));
            for (int k = 0; k < num_tastes_; ++k)
                model.user_taste[r][to_size(k)] =
                    (static_cast<double>(counts[r][to_size(k)]) + hyper_doc_) /
                    (static_cast<double>(totals[r]) + doc_norm);
        }
        model.rebuild_user_index();

        // In-sample mixture log-likelihood of the final point estimate.
        auto theta = estimate_doc_taste();
        double ll = 0.0;
        for (std::size_t d = 0; d < doc_tokens_.size(); ++d) {
            for (int token : doc_tokens_[d]) {
                double p = 0.0;
                for (int k = 0; k < num_tastes_; ++k)
                    p += theta[d][to_size(k)] * model.taste_track[to_size(k)][to_size(token)];
                ll += std::log(p);
            }
        }
        model.meta.final_log_likelihood = ll;
        return model;
    }

private:
    static std::size_t to_size(int v) { return static_cast<std::size_t>(v); }

    void add_count(std::size_t doc, int token, int taste, int delta) {
        doc_taste_[doc][to_size(taste)] += delta;
        taste_token_[to_size(taste)][to_size(token)] += delta;
        taste_total_[to_size(taste)] += delta;
    }

    const Corpus* corpus_;
    int num_tastes_;
    int vocab_size_;
    double hyper_doc_;
    double hyper_word_;
    std::mt19937_64 rng_;
    int sweeps_done_ = 0;

    std::vector<std::vector<int>> doc_tokens_;    // expanded token instances
    std::vector<std::vector<int>> assignments_;   // z, parallel to doc_tokens_
    std::vector<std::vector<int>> doc_taste_;     // D x K
    std::vector<std::vector<int>> taste_token_;   // K x V
    std::vector<int> taste_total_;                // K
    std::vector<double> weights_;                 // scratch
};

inline double resolved_hyper_doc(const LdaOptions& opts) {
    return opts.hyper_doc > 0.0 ? opts.hyper_doc : 50.0 / opts.num_tastes;
}

inline TasteModel train(const Corpus& corpus, const LdaOptions& opts) {
    if (opts.num_tastes < 1) throw InvalidK("taste count must be >= 1");
    if (opts.iterations < 1) throw BadConfig("iterations must be >= 1");
    GibbsSampler sampler(corpus, opts.num_tastes, resolved_hyper_doc(opts), opts.hyper_word,
                         opts.seed);
    sampler.run(opts.iterations);
    return sampler.finalize(opts.seed);
}

// Snapshots one chain at each requested sweep count. The snapshot at
// iteration n is identical to train() with iterations = n and the same seed.
inline std::vector<TasteModel> train_with_checkpoints(const Corpus& corpus, const LdaOptions& opts,
                                                      std::span<const int> checkpoints) {
    if (opts.num_tastes < 1) throw InvalidK("taste count must be >= 1");
    std::vector<int> points(checkpoints.begin(), checkpoints.end());
    std::sort(points.begin(), points.end());
    for (int p : points)
        if (p < 1) throw BadConfig("checkpoint iterations must be >= 1");
    GibbsSampler sampler(corpus, opts.num_tastes, resolved_hyper_doc(opts), opts.hyper_word,
                         opts.seed);
    std::vector<TasteModel> out;
    int done = 0;
    for (int p : points) {
        sampler.run(p - done);
        done = p;
        out.push_back(sampler.finalize(opts.seed));
    }
    return out;
}

struct PerplexityResult {
    double perplexity = 0.0;
    std::size_t tokens_scored = 0;
    std::size_t tokens_out_of_vocab = 0;
};

// Held-out perplexity exp(-sum log p(doc) / sum N). Each document's taste
// mixture is re-estimated by fold-in Gibbs with taste_track frozen; the
// document likelihood is then the mixture likelihood of its tokens.
// Out-of-vocabulary tokens are dropped and counted. The per-document fold-in
// seed is derived from the document content, so duplicated documents score
// identically and perplexity is exactly invariant under duplication.
inline PerplexityResult perplexity(const TasteModel& model, const Corpus& heldout,
                                   int fold_in_iterations, std::uint64_t seed) {
    if (heldout.docs.empty()) throw EmptyHeldout("held-out corpus has no documents");
    if (fold_in_iterations < 0) throw BadConfig("fold_in_iterations must be >= 0");
    const int K = model.num_tastes;
    const double doc_norm = model.hyper_doc * K;

    double total_ll = 0.0;
    std::size_t total_tokens = 0;
    std::size_t total_oov = 0;
    for (const auto& doc : heldout.docs) {
        std::vector<int> tokens;
        tokens.reserve(doc.total);
        for (auto [token, count] : doc.counts) {
            if (token < 0 || token >= model.vocab_size) {
                total_oov += static_cast<std::size_t>(count);
                continue;
            }
            for (int c = 0; c < count; ++c) tokens.push_back(token);
        }
        if (tokens.empty()) continue;

        std::uint64_t doc_hash = fnv1a64(std::string_view(
            reinterpret_cast<const char*>(tokens.data()), tokens.size() * sizeof(int)));
        std::mt19937_64 rng(mix_seed(seed, doc_hash));

        std::vector<int> z(tokens.size());
        std::vector<double> counts(static_cast<std::size_t>(K), 0.0);
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            z[i] = uniform_below(rng, K);
            counts[static_cast<std::size_t>(z[i])] += 1.0;
        }
        std::vector<double> weights(static_cast<std::size_t>(K));
        for (int it = 0; it < fold_in_iterations; ++it) {
            for (std::size_t i = 0; i < tokens.size(); ++i) {
                counts[static_cast<std::size_t>(z[i])] -= 1.0;
                for (int k = 0; k < K; ++k)
                    weights[static_cast<std::size_t>(k)] =
                        (counts[static_cast<std::size_t>(k)] + model.hyper_doc) *
                        model.taste_track[static_cast<std::size_t>(k)]
                                         [static_cast<std::size_t>(tokens[i])];
                z[i] = sample_categorical(rng, weights);
                counts[static_cast<std::size_t>(z[i])] += 1.0;
            }
        }
        std::vector<double> theta(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k)
            theta[static_cast<std::size_t>(k)] =
                (counts[static_cast<std::size_t>(k)] + model.hyper_doc) /
                (static_cast<double>(tokens.size()) + doc_norm);
        for (int token : tokens) {
            double p = 0.0;
            for (int k = 0; k < K; ++k)
                p += theta[static_cast<std::size_t>(k)] *
                     model.taste_track[static_cast<std::size_t>(k)][static_cast<std::size_t>(token)];
            total_ll += std::log(p);
        }
        total_tokens += tokens.size();
    }
    if (total_tokens == 0) throw AllOutOfVocabulary("every held-out token is out of vocabulary");

    PerplexityResult result;
    result.perplexity = std::exp(-total_ll / static_cast<double>(total_tokens));
    result.tokens_scored = total_tokens;
    result.tokens_out_of_vocab = total_oov;
    return result;
}

// The n highest-probability tracks of one taste, ties broken by token id.
inline std::vector<std::pair<int, double>> top_tracks(const TasteModel& model, int taste, int n) {
    if (taste < 0 || taste >= model.num_tastes)
        throw BadTasteIndex("taste index " + std::to_string(taste) + " out of range");
    const auto& row = model.taste_track[static_cast<std::size_t>(taste)];
    std::vector<std::pair<int, double>> entries;
    entries.reserve(row.size());
    for (std::size_t v = 0; v < row.size(); ++v) entries.emplace_back(static_cast<int>(v), row[v]);
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (n < static_cast<int>(entries.size())) entries.resize(static_cast<std::size_t>(std::max(n, 0)));
    return entries;
}

struct SelectionCell {
    int num_tastes = 0;
    int iterations = 0;
    double perplexity = 0.0;
};

struct ModelSelection {
    int best_num_tastes = 0;
    int best_iterations = 0;
    std::vector<SelectionCell> grid;
};

// Elbow rule over a perplexity grid: the smallest taste count whose best
// perplexity is within `tolerance` (relative) of the grid minimum, then the
// smallest iteration count reaching that bar at the chosen taste count.
inline std::pair<int, int> choose_elbow(std::span<const SelectionCell> grid, double tolerance) {
    if (grid.empty()) throw BadConfig("empty selection grid");
    double grid_min = grid[0].perplexity;
    for (const auto& c : grid) grid_min = std::min(grid_min, c.perplexity);
    const double bar = grid_min * (1.0 + tolerance);

    std::vector<int> ks;
    for (const auto& c : grid) ks.push_back(c.num_tastes);
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

    for (int k : ks) {
        double best_at_k = std::numeric_limits<double>::infinity();
        for (const auto& c : grid)
            if (c.num_tastes == k) best_at_k = std::min(best_at_k, c.perplexity);
        if (best_at_k <= bar) {
            std::vector<const SelectionCell*> cells;
            for (const auto& c : grid)
                if (c.num_tastes == k) cells.push_back(&c);
            std::sort(cells.begin(), cells.end(),
                      [](const SelectionCell* a, const SelectionCell* b) {
                          return a->iterations < b->iterations;
                      });
            for (const auto* c : cells)
                if (c->perplexity <= bar) return {k, c->iterations};
        }
    }
    throw Error("elbow selection failed");  // unreachable: the minimum qualifies
}

// Grid search over (taste count, iterations). Documents of a held-out user
// fraction form the evaluation set; each taste count runs one chain with
// snapshots at every iteration candidate.
inline ModelSelection select_model(const Corpus& corpus, std::span<const int> taste_candidates,
                                   std::span<const int> iteration_candidates,
                                   double heldout_fraction, double tolerance,
                                   int fold_in_iterations, std::uint64_t seed, int threads = 1) {
    if (taste_candidates.empty() || iteration_candidates.empty())
        throw BadConfig("candidate lists must be non-empty");
    if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0))
        throw BadConfig("heldout_fraction must be in (0, 1)");

    std::vector<std::string> user_order;
    std::unordered_map<std::string, bool> seen;
    for (const auto& doc : corpus.docs)
        if (seen.emplace(doc.user_id, true).second) user_order.push_back(doc.user_id);
    if (user_order.size() < 2) throw BadConfig("need at least two users to hold some out");

    std::vector<std::size_t> idx(user_order.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(mix_seed(seed, 0x5e1ec7));
    deterministic_shuffle(idx, rng);
    std::size_t heldout_users = static_cast<std::size_t>(
        std::nearbyint(heldout_fraction * static_cast<double>(user_order.size())));
    heldout_users = std::clamp<std::size_t>(heldout_users, 1, user_order.size() - 1);
    std::unordered_map<std::string, bool> is_heldout;
    for (std::size_t i = 0; i < heldout_users; ++i) is_heldout.emplace(user_order[idx[i]], true);

    Corpus training, evaluation;
    training.vocab_size = evaluation.vocab_size = corpus.vocab_size;
    training.granularity = evaluation.granularity = corpus.granularity;
    for (const auto& doc : corpus.docs)
        (is_heldout.count(doc.user_id) ? evaluation : training).docs.push_back(doc);
    if (training.docs.empty() || evaluation.docs.empty())
        throw BadConfig("held-out split produced an empty corpus");

    std::vector<int> iters(iteration_candidates.begin(), iteration_candidates.end());
    std::sort(iters.begin(), iters.end());

    std::vector<std::vector<SelectionCell>> per_k(taste_candidates.size());
    parallel_for(taste_candidates.size(), threads, [&](std::size_t ki) {
        int k = taste_candidates[ki];
        LdaOptions opts;
        opts.num_tastes = k;
        opts.hyper_word = 0.01;
        opts.seed = mix_seed(seed, static_cast<std::uint64_t>(k));
        auto snapshots = train_with_checkpoints(training, opts, iters);
        for (std::size_t ii = 0; ii < iters.size(); ++ii) {
            auto perp = perplexity(snapshots[ii], evaluation, fold_in_iterations,
                                   mix_seed(opts.seed, static_cast<std::uint64_t>(iters[ii])));
            per_k[ki].push_back({k, iters[ii], perp.perplexity});
        }
    });

    ModelSelection selection;
    for (auto& cells : per_k)
        selection.grid.insert(selection.grid.end(), cells.begin(), cells.end());
    auto [best_k, best_iters] = choose_elbow(selection.grid, tolerance);
    selection.best_num_tastes = best_k;
    selection.best_iterations = best_iters;
    return selection;
}

}  // namespace novelty
