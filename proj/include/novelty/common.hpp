#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace novelty {

// ---------------------------------------------------------------------------
// Error taxonomy. Every named failure mode in the library throws one of these
// so callers (and tests) can react to the specific condition.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedLine : Error {
    MalformedLine(std::size_t line, const std::string& detail)
        : Error("malformed line " + std::to_string(line) + ": " + detail), line_no(line) {}
    std::size_t line_no;
};

struct EmptyInput : Error {
    using Error::Error;
};

struct UserTooSparse : Error {
    UserTooSparse(std::string user, std::size_t sessions, std::size_t required)
        : Error("user " + user + " has " + std::to_string(sessions) + " sessions, needs " +
                std::to_string(required)),
          user_id(std::move(user)) {}
    std::string user_id;
};

struct InvalidK : Error {
    using Error::Error;
};
struct EmptyCorpus : Error {
    using Error::Error;
};
struct EmptyHeldout : Error {
    using Error::Error;
};
struct AllOutOfVocabulary : Error {
    using Error::Error;
};
struct BadTasteIndex : Error {
    using Error::Error;
};
struct EmptySession : Error {
    using Error::Error;
};
struct TrajectoryTooShort : Error {
    using Error::Error;
};
struct NoEpisodes : Error {
    using Error::Error;
};
struct NoHeldout : Error {
    using Error::Error;
};
struct TooFewUsers : Error {
    using Error::Error;
};
struct EmptyGroup : Error {
    using Error::Error;
};
struct BadConfig : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct MissingArtifact : Error {
    using Error::Error;
};
struct StaleArtifact : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic randomness.
//
// All stochastic code in the library draws from std::mt19937_64 through
// uniform01() below, never through std::uniform_*_distribution, so that a
// seed pins the exact sample sequence.
// ---------------------------------------------------------------------------

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n).
inline int uniform_below(std::mt19937_64& rng, int n) {
    int v = static_cast<int>(uniform01(rng) * n);
    return v >= n ? n - 1 : v;
}

// Samples an index proportional to non-negative weights (need not be
// normalized). The caller guarantees a strictly positive total.
inline int sample_categorical(std::mt19937_64& rng, std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = uniform01(rng) * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (r < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

// Deterministic in-place Fisher-Yates shuffle (std::shuffle's draw pattern is
// implementation-defined).
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_below(rng, static_cast<int>(i)));
        std::swap(v[i - 1], v[j]);
    }
}

// ---------------------------------------------------------------------------
// Small numeric helpers shared across modules.
// ---------------------------------------------------------------------------

// Normalizes log-scores into a probability vector. Entries of -inf map to
// exactly 0. Invariant under adding any constant to all scores.
inline std::vector<double> posterior_from_log_scores(std::span<const double> log_scores) {
    double m = -std::numeric_limits<double>::infinity();
    for (double s : log_scores) m = std::max(m, s);
    std::vector<double> out(log_scores.size(), 0.0);
    if (!std::isfinite(m)) return out;  // all -inf; caller treats as invalid
    double total = 0.0;
    for (std::size_t i = 0; i < log_scores.size(); ++i) {
        if (std::isfinite(log_scores[i])) {
            out[i] = std::exp(log_scores[i] - m);
            total += out[i];
        }
    }
    for (double& p : out) p /= total;
    return out;
}

// Cosine similarity. Identical vectors give exactly 1, disjoint-support
// non-negative vectors exactly 0. The single-sqrt form makes the identical
// case exact in IEEE arithmetic.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    double denom = std::sqrt(na * nb);
    return denom > 0.0 ? dot / denom : 0.0;
}

// Total variation distance between two distributions: 0.5 * sum |p - q|.
inline double total_variation(std::span<const double> p, std::span<const double> q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

inline double mean_of(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

// Population standard deviation.
inline double stddev_of(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    double mu = mean_of(xs);
    double s = 0.0;
    for (double x : xs) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(xs.size()));
}

// ---------------------------------------------------------------------------
// Content hashing for the artifact freshness chain.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

inline std::string content_hash(std::string_view bytes) { return to_hex(fnv1a64(bytes)); }

inline std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content_hash(bytes);
}

// Shortest round-trip decimal form; used everywhere a double reaches a file
// so artifact bytes are reproducible.
inline std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

// ---------------------------------------------------------------------------
// Tiny fork-join helper. Work items must be independent; results land in
// caller-owned slots, so the outcome does not depend on the thread count.
// ---------------------------------------------------------------------------

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace novelty
