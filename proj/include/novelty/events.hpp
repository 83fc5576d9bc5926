#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "novelty/common.hpp"
#include "novelty/timeutil.hpp"

namespace novelty {

// One consumption record. track_id is the source id when present, otherwise
// "artist||title" so rows without a catalog id keep a stable identity.
struct Event {
    std::string user_id;
    std::int64_t timestamp = 0;  // UTC seconds since epoch
    std::string artist_id;       // may be empty
    std::string artist_name;
    std::string track_id;
    std::string track_name;

    bool operator==(const Event&) const = default;
};

struct DatasetStats {
    std::size_t record_count = 0;
    std::size_t user_count = 0;
    std::size_t artist_count = 0;
    std::size_t unique_track_count = 0;

    bool operator==(const DatasetStats&) const = default;
};

enum class ParseStrictness { Strict, Lenient };

// Immutable, canonically ordered view of a consumption log: users sorted by
// id, each user's events sorted by timestamp (stable, so equal-timestamp rows
// keep their relative input order), and track tokens dense in [0, V),
// assigned by first appearance in that canonical traversal. The canonical
// ordering makes ingestion independent of input line order and makes the
// TSV round trip exact.
class EventLog {
public:
    struct User {
        std::string id;
        std::vector<Event> events;  // time-sorted
        std::vector<int> tokens;    // tokens[i] is the dense id of events[i].track_id

        bool operator==(const User&) const = default;
    };

    EventLog() = default;

    static EventLog from_events(std::vector<Event> events, std::size_t skipped = 0) {
        EventLog log;
        log.skipped_ = skipped;
        std::map<std::string, std::vector<Event>> grouped;
        for (auto& ev : events) grouped[ev.user_id].push_back(std::move(ev));
        log.users_.reserve(grouped.size());
        for (auto& [id, evs] : grouped) {
            std::stable_sort(evs.begin(), evs.end(), [](const Event& a, const Event& b) {
                return a.timestamp < b.timestamp;
            });
            User u;
            u.id = id;
            u.events = std::move(evs);
            log.users_.push_back(std::move(u));
        }
        for (auto& u : log.users_) {
            u.tokens.reserve(u.events.size());
            for (const auto& ev : u.events) {
                auto [it, inserted] =
                    log.token_of_.try_emplace(ev.track_id, static_cast<int>(log.vocab_.size()));
                if (inserted) log.vocab_.push_back(ev.track_id);
                u.tokens.push_back(it->second);
            }
        }
        return log;
    }

    const std::vector<User>& users() const { return users_; }
    const std::vector<std::string>& vocabulary() const { return vocab_; }
    int vocab_size() const { return static_cast<int>(vocab_.size()); }
    std::size_t skipped_lines() const { return skipped_; }

    std::size_t event_count() const {
        std::size_t n = 0;
        for (const auto& u : users_) n += u.events.size();
        return n;
    }

    int token_of(const std::string& track_id) const {
        auto it = token_of_.find(track_id);
        return it == token_of_.end() ? -1 : it->second;
    }

    const User* find_user(std::string_view id) const {
        auto it = std::lower_bound(users_.begin(), users_.end(), id,
                                   [](const User& u, std::string_view v) { return u.id < v; });
        return it != users_.end() && it->id == id ? &*it : nullptr;
    }

private:
    std::vector<User> users_;
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, int> token_of_;
    std::size_t skipped_ = 0;
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

}  // namespace detail

// Parses the 6-column layout: userid, ISO-8601 timestamp, artist-mbid,
// artist-name, track-mbid, track-name. Lenient mode counts and skips bad
// lines; strict mode throws MalformedLine at the first one. Blank lines are
// ignored either way.
inline EventLog parse_events(std::istream& in, ParseStrictness strictness) {
    std::vector<Event> events;
    std::size_t skipped = 0;
    std::size_t line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fail = [&](const std::string& why) {
            if (strictness == ParseStrictness::Strict) throw MalformedLine(line_no, why);
            ++skipped;
        };
        auto fields = detail::split_tabs(line);
        if (fields.size() != 6) {
            fail("expected 6 tab-separated fields, got " + std::to_string(fields.size()));
            continue;
        }
        if (fields[0].empty()) {
            fail("empty user id");
            continue;
        }
        auto ts = timeutil::parse_iso8601(fields[1]);
        if (!ts) {
            fail("bad timestamp '" + std::string(fields[1]) + "'");
            continue;
        }
        Event ev;
        ev.user_id = std::string(fields[0]);
        ev.timestamp = *ts;
        ev.artist_id = std::string(fields[2]);
        ev.artist_name = std::string(fields[3]);
        ev.track_name = std::string(fields[5]);
        if (!fields[4].empty()) {
            ev.track_id = std::string(fields[4]);
        } else if (!ev.artist_name.empty() || !ev.track_name.empty()) {
            ev.track_id = ev.artist_name + "||" + ev.track_name;
        } else {
            fail("no track identity (empty track id, artist and title)");
            continue;
        }
        events.push_back(std::move(ev));
    }
    if (events.empty()) throw EmptyInput("no valid events in input");
    return EventLog::from_events(std::move(events), skipped);
}

// Canonical TSV emission; parse_events(write_tsv(log)) == log. Text fields
// are TSV-sanitized (tabs and newlines become spaces).
inline void write_tsv(const EventLog& log, std::ostream& out) {
    auto clean = [](std::string s) {
        for (char& c : s)
            if (c == '\t' || c == '\n' || c == '\r') c = ' ';
        return s;
    };
    for (const auto& u : log.users()) {
        for (const auto& ev : u.events) {
            out << clean(ev.user_id) << '\t' << timeutil::format_iso8601(ev.timestamp) << '\t'
                << clean(ev.artist_id) << '\t' << clean(ev.artist_name) << '\t'
                << clean(ev.track_id) << '\t' << clean(ev.track_name) << '\n';
        }
    }
}

// Users are counted by distinct user_id, tracks by distinct track_id, and
// artists by artist_id when present else artist_name (mirroring the track-id
// synthesis rule); rows with neither contribute no artist.
inline DatasetStats dataset_stats(const EventLog& log) {
    DatasetStats stats;
    stats.record_count = log.event_count();
    stats.user_count = log.users().size();
    stats.unique_track_count = static_cast<std::size_t>(log.vocab_size());
    std::unordered_map<std::string, bool> artists;
    for (const auto& u : log.users()) {
        for (const auto& ev : u.events) {
            const std::string& key = ev.artist_id.empty() ? ev.artist_name : ev.artist_id;
            if (!key.empty()) artists.emplace(key, true);
        }
    }
    stats.artist_count = artists.size();
    return stats;
}

// Drops events whose track occurs fewer than min_count times globally and
// re-densifies the vocabulary. Idempotent at fixed min_count.
inline EventLog prune_vocabulary(const EventLog& log, std::size_t min_count) {
    if (min_count < 1) throw BadConfig("min_count must be >= 1");
    std::vector<std::size_t> counts(static_cast<std::size_t>(log.vocab_size()), 0);
    for (const auto& u : log.users())
        for (int t : u.tokens) ++counts[static_cast<std::size_t>(t)];
    std::vector<Event> kept;
    for (const auto& u : log.users()) {
        for (std::size_t i = 0; i < u.events.size(); ++i) {
            if (counts[static_cast<std::size_t>(u.tokens[i])] >= min_count)
                kept.push_back(u.events[i]);
        }
    }
    if (kept.empty()) throw EmptyInput("vocabulary pruning removed every event");
    return EventLog::from_events(std::move(kept), log.skipped_lines());
}

}  // namespace novelty
