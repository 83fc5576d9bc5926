#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "novelty/common.hpp"
#include "novelty/events.hpp"

namespace novelty {

// A maximal run of one user's events whose inter-event gaps never exceed the
// configured threshold.
struct Session {
    std::string user_id;
    std::int64_t start = 0;
    std::int64_t end = 0;
    std::vector<int> tokens;  // in consumption order

    bool operator==(const Session&) const = default;
};

struct UserSessions {
    std::string user_id;
    std::vector<Session> sessions;  // time-ordered, disjoint
};

// Greedy gap split: a new session starts whenever the gap to the previous
// event strictly exceeds max_gap_seconds.
inline std::vector<UserSessions> sessionize(const EventLog& log, std::int64_t max_gap_seconds) {
    if (max_gap_seconds <= 0) throw BadConfig("max_gap must be positive");
    std::vector<UserSessions> out;
    out.reserve(log.users().size());
    for (const auto& u : log.users()) {
        UserSessions us;
        us.user_id = u.id;
        for (std::size_t i = 0; i < u.events.size(); ++i) {
            std::int64_t ts = u.events[i].timestamp;
            if (us.sessions.empty() || ts - us.sessions.back().end > max_gap_seconds) {
                Session s;
                s.user_id = u.id;
                s.start = ts;
                s.end = ts;
                us.sessions.push_back(std::move(s));
            }
            us.sessions.back().end = ts;
            us.sessions.back().tokens.push_back(u.tokens[i]);
        }
        if (!us.sessions.empty()) out.push_back(std::move(us));
    }
    return out;
}

// Bag-of-words corpus. At Granularity::User there is one document per active
// user (all sessions pooled); at Granularity::Session one per session.
struct Corpus {
    enum class Granularity { User, Session };

    struct Document {
        std::string user_id;
        int session_index = -1;                   // -1 for user-level documents
        std::vector<std::pair<int, int>> counts;  // (token, count), token-ascending
        std::size_t total = 0;
    };

    std::vector<Document> docs;
    int vocab_size = 0;
    Granularity granularity = Granularity::User;
};

inline Corpus build_corpus(std::span<const UserSessions> users, Corpus::Granularity granularity,
                           int vocab_size) {
    Corpus corpus;
    corpus.vocab_size = vocab_size;
    corpus.granularity = granularity;
    auto bag_to_doc = [](std::map<int, int>& bag, Corpus::Document& doc) {
        for (auto [token, count] : bag) {
            doc.counts.emplace_back(token, count);
            doc.total += static_cast<std::size_t>(count);
        }
    };
    for (const auto& us : users) {
        if (granularity == Corpus::Granularity::User) {
            std::map<int, int> bag;
            for (const auto& s : us.sessions)
                for (int t : s.tokens) ++bag[t];
            if (bag.empty()) continue;
            Corpus::Document doc;
            doc.user_id = us.user_id;
            bag_to_doc(bag, doc);
            corpus.docs.push_back(std::move(doc));
        } else {
            for (std::size_t i = 0; i < us.sessions.size(); ++i) {
                std::map<int, int> bag;
                for (int t : us.sessions[i].tokens) ++bag[t];
                Corpus::Document doc;
                doc.user_id = us.user_id;
                doc.session_index = static_cast<int>(i);
                bag_to_doc(bag, doc);
                corpus.docs.push_back(std::move(doc));
            }
        }
    }
    return corpus;
}

namespace detail {

// ceil(f * n) with protection against f*n landing a hair above an integer in
// floating point (0.8 * 5 must give 4, not 5).
inline std::size_t ceil_fraction(double fraction, std::size_t n) {
    double x = fraction * static_cast<double>(n);
    double nearest = std::nearbyint(x);
    double c = std::abs(x - nearest) < 1e-6 ? nearest : std::ceil(x);
    auto k = static_cast<std::size_t>(c);
    if (k < 1) k = 1;
    if (k > n - 1) k = n - 1;
    return k;
}

}  // namespace detail

struct SplitSessions {
    std::vector<Session> train;
    std::vector<Session> test;
};

// Chronological split: the first ceil(train_fraction * n) sessions train, the
// rest test. No shuffling. Throws UserTooSparse below min_sessions.
inline SplitSessions split_user_sessions(const std::vector<Session>& sessions,
                                         double train_fraction, std::size_t min_sessions = 5) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw BadConfig("train_fraction must be in (0, 1)");
    if (sessions.size() < min_sessions) {
        std::string user = sessions.empty() ? std::string("<unknown>") : sessions.front().user_id;
        throw UserTooSparse(user, sessions.size(), min_sessions);
    }
    std::size_t k = detail::ceil_fraction(train_fraction, sessions.size());
    SplitSessions out;
    out.train.assign(sessions.begin(), sessions.begin() + static_cast<std::ptrdiff_t>(k));
    out.test.assign(sessions.begin() + static_cast<std::ptrdiff_t>(k), sessions.end());
    return out;
}

struct UserSplit {
    std::string user_id;
    SplitSessions split;
};

struct TemporalSplitResult {
    std::vector<UserSplit> users;
    std::vector<std::string> excluded;  // too few sessions for policy learning
};

inline TemporalSplitResult temporal_split(std::span<const UserSessions> users,
                                          double train_fraction, std::size_t min_sessions = 5) {
    TemporalSplitResult out;
    for (const auto& us : users) {
        try {
            out.users.push_back({us.user_id, split_user_sessions(us.sessions, train_fraction,
                                                                 min_sessions)});
        } catch (const UserTooSparse&) {
            out.excluded.push_back(us.user_id);
        }
    }
    return out;
}

}  // namespace novelty
