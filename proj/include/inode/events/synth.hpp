#pragma once

// Deterministic moving-dot event streams for desk-scale experiments.
//
// A bright disc crosses the sensor. Its leading edge fires ON events
// (p = 1) and its trailing edge OFF events (p = 0), so both the drift of
// the event cloud and the ON/OFF offset along the heading encode the
// motion class. Inter-event times are exponential with mean 100 us.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "inode/errors.hpp"
#include "inode/events/event.hpp"

namespace inode::synth {

enum class Motion : int {
    left_to_right = 0,
    right_to_left,
    down,
    up,
    diag_down_right,
    diag_up_left,
    diag_down_left,
    diag_up_right,
    circle_cw,
    circle_ccw,
};

inline constexpr int motion_count = 10;
inline constexpr double mean_interval_us = 100.0;

inline const char* motion_name(int class_id) {
    static constexpr std::array<const char*, motion_count> names = {
        "left_to_right", "right_to_left", "down",      "up",        "diag_down_right",
        "diag_up_left",  "diag_down_left", "diag_up_right", "circle_cw", "circle_ccw"};
    if (class_id < 0 || class_id >= motion_count) throw InputError("unknown motion class " + std::to_string(class_id));
    return names[static_cast<std::size_t>(class_id)];
}

struct Pose {
    double cx, cy;       // centre, fraction of the sensor extent
    double heading;      // radians, image coordinates (y down)
};

namespace detail {

inline Pose linear(double x0, double y0, double x1, double y1, double s) {
    return {x0 + (x1 - x0) * s, y0 + (y1 - y0) * s, std::atan2(y1 - y0, x1 - x0)};
}

// progress in [0, 1]; lane shifts the path perpendicular to the motion.
inline Pose pose_at(Motion m, double s, double lane) {
    constexpr double lo = 0.15, hi = 0.85;
    const double mid = 0.5 + lane;
    switch (m) {
        case Motion::left_to_right: return linear(lo, mid, hi, mid, s);
        case Motion::right_to_left: return linear(hi, mid, lo, mid, s);
        case Motion::down: return linear(mid, lo, mid, hi, s);
        case Motion::up: return linear(mid, hi, mid, lo, s);
        case Motion::diag_down_right: return linear(lo + lane, lo - lane, hi + lane, hi - lane, s);
        case Motion::diag_up_left: return linear(hi + lane, hi - lane, lo + lane, lo - lane, s);
        case Motion::diag_down_left: return linear(hi + lane, lo + lane, lo + lane, hi + lane, s);
        case Motion::diag_up_right: return linear(lo + lane, hi + lane, hi + lane, lo + lane, s);
        case Motion::circle_cw:
        case Motion::circle_ccw: {
            const double dir = m == Motion::circle_cw ? 1.0 : -1.0;
            const double phi = dir * 2.0 * std::numbers::pi * s;
            const double radius = 0.3 + lane * 0.5;
            return {0.5 + radius * std::cos(phi), 0.5 + radius * std::sin(phi), phi + dir * std::numbers::pi / 2};
        }
    }
    return {0.5, 0.5, 0.0};
}

}  // namespace detail

// Pure function of its arguments.
inline EventSequence synth_moving_dot(int class_id, std::uint64_t seed, std::size_t n_events, SensorDims dims,
                                      double noise_rate) {
    if (class_id < 0 || class_id >= motion_count) throw InputError("unknown motion class " + std::to_string(class_id));
    if (n_events < 1) throw InputError("n_events must be >= 1");
    if (dims.width < 2 || dims.height < 2) throw InputError("sensor must be at least 2x2");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw InputError("noise_rate must be in [0, 1]");

    std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(class_id), static_cast<std::uint32_t>(n_events)};
    std::mt19937_64 rng(sseq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::exponential_distribution<double> gap(1.0 / mean_interval_us);

    const double lane = (unit(rng) - 0.5) * 0.2;
    const double w = dims.width, h = dims.height;
    const double radius = 0.1 * std::min(w, h);
    const double duration = mean_interval_us * static_cast<double>(n_events);
    const auto motion = static_cast<Motion>(class_id);

    EventSequence seq;
    seq.label = class_id;
    seq.dims = dims;
    seq.events.reserve(n_events);
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < n_events; ++i) {
        t += std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(gap(rng))));
        Event e;
        e.t = t;
        if (unit(rng) < noise_rate) {
            e.x = static_cast<std::uint16_t>(std::min(w - 1, std::floor(unit(rng) * w)));
            e.y = static_cast<std::uint16_t>(std::min(h - 1, std::floor(unit(rng) * h)));
            e.p = unit(rng) < 0.5 ? 1 : 0;
        } else {
            const double s = std::min(1.0, static_cast<double>(t) / duration);
            const Pose pose = detail::pose_at(motion, s, lane);
            const bool leading = unit(rng) < 0.5;
            const double theta =
                pose.heading + (leading ? 0.0 : std::numbers::pi) + (unit(rng) - 0.5) * std::numbers::pi;
            const double r = radius * (0.85 + 0.3 * unit(rng));
            const double px = pose.cx * (w - 1) + r * std::cos(theta);
            const double py = pose.cy * (h - 1) + r * std::sin(theta);
            e.x = static_cast<std::uint16_t>(std::clamp(std::round(px), 0.0, w - 1));
            e.y = static_cast<std::uint16_t>(std::clamp(std::round(py), 0.0, h - 1));
            e.p = leading ? 1 : 0;
        }
        seq.events.push_back(e);
    }
    return seq;
}

struct SyntheticTask {
    std::string name = "movedot2";
    int classes = 2;
    std::size_t n_train = 2000;
    std::size_t n_test = 500;
    std::size_t events_per_sequence = 1000;
    SensorDims dims{34, 34};
    double noise_rate = 0.05;
};

// "movedot<C>" for C in 2..10.
inline SyntheticTask task_from_name(const std::string& name) {
    const std::string prefix = "movedot";
    if (name.rfind(prefix, 0) != 0) throw InputError("unknown synthetic task '" + name + "'");
    int c = 0;
    try {
        c = std::stoi(name.substr(prefix.size()));
    } catch (const std::exception&) {
        throw InputError("unknown synthetic task '" + name + "'");
    }
    if (c < 2 || c > motion_count) throw InputError("synthetic task needs 2..10 classes");
    SyntheticTask t;
    t.name = name;
    t.classes = c;
    return t;
}

// Balanced labels (index mod C); per-sample seeds are derived from (seed, split, index).
inline Dataset make_split(const SyntheticTask& task, Split split, std::uint64_t seed) {
    Dataset ds;
    ds.dims = task.dims;
    ds.split = split;
    ds.class_count = static_cast<std::size_t>(task.classes);
    for (int c = 0; c < task.classes; ++c) ds.class_names.emplace_back(motion_name(c));
    const std::size_t n = split == Split::train ? task.n_train : task.n_test;
    const std::uint64_t split_salt = split == Split::train ? 0x5EEDull : 0x7E57ull;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % static_cast<std::size_t>(task.classes));
        const std::uint64_t sample_seed = seed * 0x9E3779B97F4A7C15ull ^ (split_salt << 40) ^ i;
        auto seq = synth_moving_dot(label, sample_seed, task.events_per_sequence, task.dims, task.noise_rate);
        seq.id = std::string("synth/") + (split == Split::train ? "train/" : "test/") + std::to_string(i);
        ds.sequences.push_back(std::move(seq));
    }
    return ds;
}

}  // namespace inode::synth
