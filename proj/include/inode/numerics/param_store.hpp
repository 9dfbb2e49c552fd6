#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "inode/errors.hpp"
#include "inode/numerics/matrix.hpp"

namespace inode {

struct Param {
    std::string name;
    Matrix value;
};

// Per-parameter gradients, index-aligned with the ParamStore that produced them.
using Gradients = std::vector<Matrix>;

// Flat, ordered collection of named learnable matrices.
class ParamStore {
public:
    std::size_t add(std::string name, Matrix value) {
        if (find(name) != npos) throw InputError("duplicate parameter '" + name + "'");
        params_.push_back({std::move(name), std::move(value)});
        return params_.size() - 1;
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::size_t find(std::string_view name) const noexcept {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (params_[i].name == name) return i;
        }
        return npos;
    }

    std::size_t index_of(std::string_view name) const {
        const auto i = find(name);
        if (i == npos) throw InputError("unknown parameter '" + std::string(name) + "'");
        return i;
    }

    Matrix& value(std::string_view name) { return params_[index_of(name)].value; }
    const Matrix& value(std::string_view name) const { return params_[index_of(name)].value; }

    Param& operator[](std::size_t i) noexcept { return params_[i]; }
    const Param& operator[](std::size_t i) const noexcept { return params_[i]; }
    std::size_t size() const noexcept { return params_.size(); }
    auto begin() const noexcept { return params_.begin(); }
    auto end() const noexcept { return params_.end(); }
    auto begin() noexcept { return params_.begin(); }
    auto end() noexcept { return params_.end(); }

    std::size_t scalar_count() const noexcept {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    Gradients zero_gradients() const {
        Gradients g;
        g.reserve(params_.size());
        for (const auto& p : params_) g.emplace_back(p.value.rows(), p.value.cols());
        return g;
    }

    friend bool operator==(const ParamStore& a, const ParamStore& b) {
        if (a.params_.size() != b.params_.size()) return false;
        for (std::size_t i = 0; i < a.params_.size(); ++i) {
            if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value)) return false;
        }
        return true;
    }

private:
    std::vector<Param> params_;
};

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], fan_in = rows.
inline std::size_t count_params(const ParamStore& store) noexcept { return store.scalar_count(); }

inline Matrix init_weight(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_in, fan_out);
    for (double& v : w.values()) v = dist(rng);
    return w;
}

// Registers "<name>.w" (fan_in x fan_out) and zero "<name>.b" (1 x fan_out).
inline void add_dense(ParamStore& store, const std::string& name, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng) {
    store.add(name + ".w", init_weight(fan_in, fan_out, rng));
    store.add(name + ".b", Matrix(1, fan_out));
}

inline double global_norm(const Gradients& grads) {
    double s = 0.0;
    for (const auto& g : grads)
        for (double v : g.values()) s += v * v;
    return std::sqrt(s);
}

// Rescales so the global L2 norm is at most max_norm. Returns the norm before clipping.
inline double clip_global_norm(Gradients& grads, double max_norm) {
    const double norm = global_norm(grads);
    if (max_norm > 0.0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (auto& g : grads)
            for (double& v : g.values()) v *= f;
    }
    return norm;
}

}  // namespace inode
