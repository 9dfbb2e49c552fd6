#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "inode/errors.hpp"
#include "inode/events/event.hpp"
#include "inode/log.hpp"
#include "inode/numerics/matrix.hpp"
#include "inode/preprocess/time_stats.hpp"

namespace inode {

// (x, y) mapped to [-1, 1], polarity to {-1, +1}.
struct InputVector {
    double x = 0.0;
    double y = 0.0;
    double p = -1.0;
    friend bool operator==(const InputVector&, const InputVector&) = default;
};

inline constexpr std::size_t event_features = 3;

inline double normalize_coord(std::uint32_t v, std::uint32_t extent) noexcept {
    return (2.0 * static_cast<double>(v)) / (static_cast<double>(extent) - 1.0) - 1.0;
}

inline InputVector normalize_input(const Event& e, SensorDims dims) {
    std::uint32_t x = e.x, y = e.y;
    if (x >= dims.width || y >= dims.height) {
        warn("event (" + std::to_string(x) + ", " + std::to_string(y) + ") outside " + std::to_string(dims.width) +
             "x" + std::to_string(dims.height) + "; clamping");
        x = std::min(x, dims.width - 1);
        y = std::min(y, dims.height - 1);
    }
    return {normalize_coord(x, dims.width), normalize_coord(y, dims.height), e.p ? 1.0 : -1.0};
}

// S inputs u_0..u_{S-1} and the S normalized steps between consecutive
// timestamps t_0..t_S. Step i integrates input i over [t_i, t_{i+1}].
struct Window {
    std::vector<InputVector> inputs;
    std::vector<double> dtaus;
    std::size_t offset = 0;

    std::size_t steps() const noexcept { return dtaus.size(); }
};

// Window starting at `offset`. Indices past the end hold the last event
// with a zero step.
inline Window window_at(const EventSequence& seq, std::size_t offset, std::size_t steps, const TimeStats& stats) {
    const std::size_t m = seq.events.size();
    if (m == 0) throw InputError("cannot sample from an empty sequence");
    if (steps == 0) throw InputError("window needs at least one step");
    Window w;
    w.offset = offset;
    w.inputs.reserve(steps);
    w.dtaus.reserve(steps);
    auto at = [&](std::size_t i) -> const Event& { return seq.events[std::min(offset + i, m - 1)]; };
    for (std::size_t i = 0; i < steps; ++i) {
        const Event& cur = at(i);
        const Event& next = at(i + 1);
        w.inputs.push_back(normalize_input(cur, seq.dims));
        w.dtaus.push_back(normalize_dt(next.t >= cur.t ? next.t - cur.t : 0, stats));
    }
    return w;
}

// Offsets beyond M - S - 1 are impossible; short sequences start at 0 and
// are padded by window_at.
inline std::size_t max_offset(std::size_t m, std::size_t steps) noexcept { return m >= steps + 1 ? m - steps - 1 : 0; }

inline Window sample_subsequence(const EventSequence& seq, std::size_t steps, const TimeStats& stats,
                                 std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, max_offset(seq.events.size(), steps));
    return window_at(seq, pick(rng), steps, stats);
}

// Step-major batch: inputs[i] is B x F, dtaus[i] is B x 1.
struct Batch {
    std::vector<Matrix> inputs;
    std::vector<Matrix> dtaus;
    std::vector<int> labels;

    std::size_t batch_size() const noexcept { return labels.size(); }
    std::size_t steps() const noexcept { return inputs.size(); }
    std::size_t features() const noexcept { return inputs.empty() ? 0 : inputs.front().cols(); }
};

// with_dt_feature appends the normalized step as a fourth feature.
inline Batch make_batch(std::span<const Window> windows, std::span<const int> labels, bool with_dt_feature) {
    if (windows.empty()) throw InputError("empty batch");
    if (windows.size() != labels.size()) throw ShapeError("make_batch: windows and labels differ in count");
    const std::size_t steps = windows.front().steps();
    const std::size_t f = with_dt_feature ? event_features + 1 : event_features;
    Batch b;
    b.labels.assign(labels.begin(), labels.end());
    b.inputs.assign(steps, Matrix(windows.size(), f));
    b.dtaus.assign(steps, Matrix(windows.size(), 1));
    for (std::size_t r = 0; r < windows.size(); ++r) {
        const Window& w = windows[r];
        if (w.steps() != steps) throw ShapeError("make_batch: windows differ in length");
        for (std::size_t i = 0; i < steps; ++i) {
            Matrix& in = b.inputs[i];
            in(r, 0) = w.inputs[i].x;
            in(r, 1) = w.inputs[i].y;
            in(r, 2) = w.inputs[i].p;
            if (with_dt_feature) in(r, 3) = w.dtaus[i];
            b.dtaus[i][r] = w.dtaus[i];
        }
    }
    return b;
}

// Prefix of the first n steps.
inline Batch truncate_steps(const Batch& b, std::size_t n) {
    Batch out;
    out.labels = b.labels;
    n = std::min(n, b.steps());
    out.inputs.assign(b.inputs.begin(), b.inputs.begin() + static_cast<std::ptrdiff_t>(n));
    out.dtaus.assign(b.dtaus.begin(), b.dtaus.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
}

}  // namespace inode
