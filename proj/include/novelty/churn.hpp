#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "novelty/assignment.hpp"
#include "novelty/common.hpp"
#include "novelty/events.hpp"
#include "novelty/timeutil.hpp"

namespace novelty {

enum class SimilarityMetric { Cosine, OneMinusTotalVariation };

// Consecutive-session similarity of a user's taste profiles. The profile is
// the full session posterior, not the one-hot assignment, so the score is
// graded rather than 0/1.
struct SimilaritySeries {
    std::string user_id;
    std::vector<double> values;  // one per consecutive session pair
    double mean = 0.0;
    double stddev = 0.0;  // population
};

inline SimilaritySeries similarity_series(const TasteTrajectory& traj,
                                          SimilarityMetric metric = SimilarityMetric::Cosine) {
    if (traj.steps.size() < 2)
        throw TrajectoryTooShort("trajectory for " + traj.user_id + " has " +
                                 std::to_string(traj.steps.size()) + " steps, needs 2");
    SimilaritySeries series;
    series.user_id = traj.user_id;
    series.values.reserve(traj.steps.size() - 1);
    for (std::size_t i = 0; i + 1 < traj.steps.size(); ++i) {
        const auto& a = traj.steps[i].posterior;
        const auto& b = traj.steps[i + 1].posterior;
        double s = metric == SimilarityMetric::Cosine ? cosine_similarity(a, b)
                                                      : 1.0 - total_variation(a, b);
        series.values.push_back(s);
    }
    series.mean = mean_of(series.values);
    series.stddev = stddev_of(series.values);
    return series;
}

enum class ChurnClass { Quitting, Continuing, Excluded };

inline const char* to_string(ChurnClass c) {
    switch (c) {
        case ChurnClass::Quitting: return "quitting";
        case ChurnClass::Continuing: return "continuing";
        default: return "excluded";
    }
}

struct ChurnLabel {
    std::string user_id;
    ChurnClass label = ChurnClass::Excluded;
    double activity_span_days = 0.0;
    double days_from_last_activity_to_dataset_end = 0.0;
};

// Quitting: active for less than a year, last seen at least a year before
// the dataset ends. Continuing: active for at least a year and seen within
// the final year. Everything else (late joiners with short spans, long-gone
// long-tenured users) is Excluded so short-history users are not mislabeled.
inline ChurnLabel classify_quitting(const EventLog::User& user, std::int64_t dataset_end,
                                    double year_days = 365.0) {
    if (user.events.empty()) throw EmptyInput("user " + user.id + " has no events");
    const std::int64_t first = user.events.front().timestamp;
    const std::int64_t last = user.events.back().timestamp;
    const double span_days = static_cast<double>(last - first) / 86400.0;
    const double gap_days = static_cast<double>(dataset_end - last) / 86400.0;

    ChurnLabel out;
    out.user_id = user.id;
    out.activity_span_days = span_days;
    out.days_from_last_activity_to_dataset_end = gap_days;
    if (gap_days >= year_days) {
        out.label = span_days < year_days ? ChurnClass::Quitting : ChurnClass::Excluded;
    } else {
        out.label = span_days >= year_days ? ChurnClass::Continuing : ChurnClass::Excluded;
    }
    return out;
}

struct MonthCount {
    int year = 0;
    unsigned month = 1;  // 1..12
    std::int64_t count = 0;
};

// Calendar-month (UTC) track counts across the user's active span, with zero
// months filled in.
inline std::vector<MonthCount> monthly_activity(const EventLog::User& user) {
    if (user.events.empty()) throw EmptyInput("user " + user.id + " has no events");
    auto month_index = [](std::int64_t ts) {
        std::int64_t days = ts / 86400;
        if (ts % 86400 < 0) --days;
        auto cd = timeutil::civil_from_days(days);
        return static_cast<std::int64_t>(cd.year) * 12 + (cd.month - 1);
    };
    const std::int64_t first = month_index(user.events.front().timestamp);
    const std::int64_t last = month_index(user.events.back().timestamp);
    std::vector<MonthCount> out;
    out.reserve(static_cast<std::size_t>(last - first + 1));
    for (std::int64_t m = first; m <= last; ++m) {
        MonthCount mc;
        mc.year = static_cast<int>(m >= 0 ? m / 12 : (m - 11) / 12);
        mc.month = static_cast<unsigned>(m - static_cast<std::int64_t>(mc.year) * 12 + 1);
        out.push_back(mc);
    }
    for (const auto& ev : user.events)
        ++out[static_cast<std::size_t>(month_index(ev.timestamp) - first)].count;
    return out;
}

struct GroupSummary {
    ChurnClass label = ChurnClass::Excluded;
    double mean_mu = 0.0;  // mean of per-user similarity means
    double std_mu = 0.0;   // population std of per-user similarity means
    std::size_t n = 0;
};

// Aggregates per-user mean similarities within each churn group. Groups with
// no members are omitted; an entirely empty pairing throws.
inline std::vector<GroupSummary> subgroup_report(std::span<const ChurnLabel> labels,
                                                 std::span<const SimilaritySeries> series) {
    std::map<std::string, double> mu_of;
    for (const auto& s : series) mu_of[s.user_id] = s.mean;
    std::map<ChurnClass, std::vector<double>> groups;
    for (const auto& label : labels) {
        auto it = mu_of.find(label.user_id);
        if (it != mu_of.end()) groups[label.label].push_back(it->second);
    }
    if (groups.empty()) throw EmptyGroup("no users with both a label and a similarity series");
    std::vector<GroupSummary> out;
    for (ChurnClass c : {ChurnClass::Quitting, ChurnClass::Continuing, ChurnClass::Excluded}) {
        auto it = groups.find(c);
        if (it == groups.end()) continue;
        GroupSummary g;
        g.label = c;
        g.mean_mu = mean_of(it->second);
        g.std_mu = stddev_of(it->second);
        g.n = it->second.size();
        out.push_back(g);
    }
    return out;
}

}  // namespace novelty
