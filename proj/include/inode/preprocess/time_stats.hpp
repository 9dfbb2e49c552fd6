#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "inode/errors.hpp"
#include "inode/events/event.hpp"

namespace inode {

// d_q: 98th percentile of training inter-event deltas (us).
// d_max: cap on the normalized step.
struct TimeStats {
    double d_q = 1.0;
    double d_max = 1.0;
    friend bool operator==(const TimeStats&, const TimeStats&) = default;
};

inline constexpr unsigned quantile_percent = 98;

// Nearest-rank percentile: element ceil(p/100 * N) - 1 of the sorted pool.
// Integer arithmetic keeps the index exact, so scaling every delta by c
// scales the result by exactly c.
inline std::uint64_t nearest_rank(std::vector<std::uint64_t> pool, unsigned percent) {
    if (pool.empty()) throw DatasetError("no inter-event deltas to take a quantile of");
    const std::size_t n = pool.size();
    const std::size_t rank = (percent * n + 99) / 100;
    const std::size_t idx = rank == 0 ? 0 : rank - 1;
    std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(idx), pool.end());
    return pool[idx];
}

// Pools consecutive deltas over every sequence.
inline TimeStats compute_dq(std::span<const EventSequence> sequences, double d_max = 1.0) {
    std::vector<std::uint64_t> pool;
    for (const auto& seq : sequences) {
        for (std::size_t i = 1; i < seq.events.size(); ++i) {
            const auto a = seq.events[i - 1].t, b = seq.events[i].t;
            pool.push_back(b >= a ? b - a : 0);
        }
    }
    if (pool.empty()) throw DatasetError("compute_dq needs at least one sequence with two or more events");
    std::uint64_t dq = nearest_rank(pool, quantile_percent);
    if (dq == 0) {
        std::uint64_t smallest = 0;
        for (auto d : pool)
            if (d > 0 && (smallest == 0 || d < smallest)) smallest = d;
        if (smallest == 0) throw DatasetError("every inter-event delta is zero");
        dq = smallest;
    }
    if (!(d_max > 0.0)) throw InputError("d_max must be positive");
    return TimeStats{static_cast<double>(dq), d_max};
}

inline TimeStats compute_dq(const Dataset& train, double d_max = 1.0) { return compute_dq(train.sequences, d_max); }

// min(dt / d_q, d_max)
inline double normalize_dt(double dt_us, const TimeStats& stats) noexcept {
    return std::min(dt_us / stats.d_q, stats.d_max);
}

inline double normalize_dt(std::uint64_t dt_us, const TimeStats& stats) noexcept {
    return normalize_dt(static_cast<double>(dt_us), stats);
}

}  // namespace inode
