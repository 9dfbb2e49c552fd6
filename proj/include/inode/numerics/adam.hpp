#pragma once

#include <cmath>
#include <cstdint>

#include "inode/errors.hpp"
#include "inode/numerics/param_store.hpp"

namespace inode {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamOptions options;
    Gradients first_moment;
    Gradients second_moment;
    std::uint64_t step = 0;

    AdamState() = default;
    AdamState(const ParamStore& params, AdamOptions opts)
        : options(opts), first_moment(params.zero_gradients()), second_moment(params.zero_gradients()) {}
};

// In-place Adam update with bias correction.
inline void adam_step(ParamStore& params, const Gradients& grads, AdamState& state) {
    if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size()) {
        throw ShapeError("adam_step: parameter/gradient/moment counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_shape(params[i].value, grads[i], "adam_step");
        require_same_shape(params[i].value, state.first_moment[i], "adam_step");
        require_same_shape(params[i].value, state.second_moment[i], "adam_step");
    }

    const auto& o = state.options;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);

    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& w = params[i].value;
        Matrix& m = state.first_moment[i];
        Matrix& v = state.second_moment[i];
        const Matrix& g = grads[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
            v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            w[k] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
        }
    }
}

}  // namespace inode
