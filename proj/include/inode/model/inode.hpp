#pragma once

// Input-filtering neural ODE classifier.
//
//   h'(t) = f(h, u) = FC3(tanh(FC2(tanh([FC1(h), FCu(u)]))))
//   z(t)  = FCc(h)
//
// integrated with forward Euler, one step per event, and trained on the
// cross-entropy averaged over every step of a sub-sequence.

#include <cstddef>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "inode/model/sequence_model.hpp"
#include "inode/model/solver.hpp"
#include "inode/numerics/tape.hpp"
#include "inode/preprocess/features.hpp"

namespace inode {

struct InodeLayout {
    std::size_t fc1_w, fc1_b, fcu_w, fcu_b, fc2_w, fc2_b, fc3_w, fc3_b, fcc_w, fcc_b;
    std::optional<std::size_t> h0;

    static InodeLayout of(const ParamStore& s) {
        InodeLayout l{s.index_of("fc1.w"), s.index_of("fc1.b"), s.index_of("fcu.w"), s.index_of("fcu.b"),
                      s.index_of("fc2.w"), s.index_of("fc2.b"), s.index_of("fc3.w"), s.index_of("fc3.b"),
                      s.index_of("fcc.w"), s.index_of("fcc.b"), std::nullopt};
        if (const auto i = s.find("h0"); i != ParamStore::npos) l.h0 = i;
        return l;
    }
};

inline ParamStore init_inode_params(const ModelSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ParamStore s;
    add_dense(s, "fc1", spec.state_dim, spec.hidden_width, rng);
    add_dense(s, "fcu", spec.input_features, spec.hidden_width, rng);
    add_dense(s, "fc2", 2 * spec.hidden_width, spec.hidden_width, rng);
    add_dense(s, "fc3", spec.hidden_width, spec.state_dim, rng);
    add_dense(s, "fcc", spec.state_dim, spec.classes, rng);
    if (spec.learn_h0) s.add("h0", Matrix(1, spec.state_dim));
    return s;
}

// The network written once against an executor (Tape or EagerOps).
template <class Ops>
struct InodeNet {
    using V = typename Ops::Value;

    Ops& ops;
    const std::vector<V>& p;
    const InodeLayout& l;
    std::size_t state_dim;

    V dense(const V& x, std::size_t w, std::size_t b) { return ops.add_bias(ops.matmul(x, p[w]), p[b]); }

    V f(const V& h, const V& u) {
        auto joined = ops.tanh(ops.concat_cols(dense(h, l.fc1_w, l.fc1_b), dense(u, l.fcu_w, l.fcu_b)));
        auto hidden = ops.tanh(dense(joined, l.fc2_w, l.fc2_b));
        return dense(hidden, l.fc3_w, l.fc3_b);
    }

    V classify(const V& h) { return dense(h, l.fcc_w, l.fcc_b); }

    V initial_state(std::size_t rows) {
        auto zeros = ops.constant(Matrix(rows, state_dim));
        return l.h0 ? ops.add_bias(zeros, p[*l.h0]) : zeros;
    }

    // Runs `steps` Euler steps over the batch. Optionally collects the logits
    // after every step; returns the step-averaged loss when requested.
    std::optional<V> run(const Batch& batch, std::size_t steps, std::vector<V>* step_logits, bool with_loss) {
        std::vector<V> inputs, dtaus;
        inputs.reserve(steps);
        dtaus.reserve(steps);
        for (std::size_t i = 0; i < steps; ++i) {
            inputs.push_back(ops.constant(batch.inputs[i]));
            dtaus.push_back(ops.constant(batch.dtaus[i]));
        }
        std::optional<V> total;
        integrate(
            ops, initial_state(batch.batch_size()), std::span<const V>(dtaus),
            [&](const V& h, std::size_t i) { return f(h, inputs[i]); },
            [&](std::size_t, const V& h) {
                auto z = classify(h);
                if (with_loss) {
                    auto li = ops.softmax_cross_entropy(z, batch.labels);
                    total = total ? ops.add(*total, li) : li;
                }
                if (step_logits) step_logits->push_back(std::move(z));
            });
        if (!with_loss || !total) return std::nullopt;
        return ops.scale(*total, 1.0 / static_cast<double>(steps));
    }
};

inline std::vector<Matrix> copy_values(const ParamStore& s) {
    std::vector<Matrix> out;
    out.reserve(s.size());
    for (const auto& p : s) out.push_back(p.value);
    return out;
}

class InodeModel final : public SequenceModel {
public:
    InodeModel(ModelSpec spec, ParamStore params)
        : spec_(std::move(spec)), params_(std::move(params)), layout_(InodeLayout::of(params_)) {
        spec_.kind = ModelKind::inode;
        validate();
    }

    static InodeModel create(ModelSpec spec, std::uint64_t seed) {
        auto params = init_inode_params(spec, seed);
        return InodeModel(std::move(spec), std::move(params));
    }

    const ModelSpec& spec() const override { return spec_; }
    ParamStore& params() override { return params_; }
    const ParamStore& params() const override { return params_; }
    const InodeLayout& layout() const noexcept { return layout_; }

    // Records the step-averaged loss on `tape`; logits per step optional.
    Var record(Tape& tape, const Batch& batch, std::vector<Var>* step_logits = nullptr) const {
        check_batch(batch);
        const auto vars = tape.parameters(params_);
        InodeNet<Tape> net{tape, vars, layout_, spec_.state_dim};
        return *net.run(batch, batch.steps(), step_logits, true);
    }

    LossAndGradients loss_and_gradients(const Batch& batch) const override {
        Tape tape;
        const Var loss = record(tape, batch);
        return {tape.value(loss)[0], tape.backward(loss, params_)};
    }

    double loss(const Batch& batch) const override {
        check_batch(batch);
        EagerOps ops;
        const auto vals = copy_values(params_);
        InodeNet<EagerOps> net{ops, vals, layout_, spec_.state_dim};
        return (*net.run(batch, batch.steps(), nullptr, true))[0];
    }

    // Per-step logits [S][B x C] and the mean loss, without a tape.
    struct Forward {
        std::vector<Matrix> step_logits;
        double loss = 0.0;
    };

    Forward forward(const Batch& batch) const {
        check_batch(batch);
        EagerOps ops;
        const auto vals = copy_values(params_);
        InodeNet<EagerOps> net{ops, vals, layout_, spec_.state_dim};
        Forward out;
        out.loss = (*net.run(batch, batch.steps(), &out.step_logits, true))[0];
        return out;
    }

    std::vector<Matrix> logits_at(const Batch& batch, std::span<const std::size_t> prefix_lengths) const override {
        check_batch(batch);
        std::size_t longest = 0;
        for (auto n : prefix_lengths) longest = std::max(longest, n);
        if (longest > batch.steps()) throw InputError("prefix longer than the batch");
        EagerOps ops;
        const auto vals = copy_values(params_);
        InodeNet<EagerOps> net{ops, vals, layout_, spec_.state_dim};
        std::vector<Matrix> all;
        net.run(batch, longest, &all, false);
        std::vector<Matrix> out;
        for (auto n : prefix_lengths) {
            if (n == 0) throw InputError("prefix length must be >= 1");
            out.push_back(all[n - 1]);
        }
        return out;
    }

    std::unique_ptr<RecurrentCell> make_cell() const override;

private:
    void validate() const {
        const auto& p = params_;
        auto expect = [&](std::size_t i, std::size_t r, std::size_t c) {
            if (p[i].value.rows() != r || p[i].value.cols() != c) {
                throw ShapeError("parameter " + p[i].name + " is " + p[i].value.shape_str() + ", expected " +
                                 std::to_string(r) + "x" + std::to_string(c));
            }
        };
        const auto n = spec_.state_dim, w = spec_.hidden_width;
        expect(layout_.fc1_w, n, w);
        expect(layout_.fcu_w, spec_.input_features, w);
        expect(layout_.fc2_w, 2 * w, w);
        expect(layout_.fc3_w, w, n);
        expect(layout_.fcc_w, n, spec_.classes);
        expect(layout_.fcc_b, 1, spec_.classes);
    }

    void check_batch(const Batch& batch) const {
        if (batch.steps() == 0) throw InputError("batch has no steps");
        if (batch.features() != spec_.input_features) {
            throw ShapeError("batch has " + std::to_string(batch.features()) + " features, model expects " +
                             std::to_string(spec_.input_features));
        }
    }

    ModelSpec spec_;
    ParamStore params_;
    InodeLayout layout_;
};

// Single-stream INODE state. Reuses preallocated rows but performs the same
// floating-point operations in the same order as the batched kernels, so its
// logits equal forward()'s bitwise.
class InodeCell final : public RecurrentCell {
public:
    explicit InodeCell(const InodeModel& model)
        : values_(copy_values(model.params())), layout_(model.layout()), n_(model.spec().state_dim) {
        width_ = values_[layout_.fc1_w].cols();
        joined_.resize(2 * width_);
        hidden_.resize(width_);
        f_.resize(n_);
        reset();
    }

    void reset() override {
        h_.assign(n_, 0.0);
        if (layout_.h0) {
            const Matrix& h0 = values_[*layout_.h0];
            for (std::size_t j = 0; j < n_; ++j) h_[j] = 0.0 + h0[j];
        }
    }

    void step(const InputVector& u, double dtau) override {
        const double in[3] = {u.x, u.y, u.p};
        dense(h_.data(), layout_.fc1_w, layout_.fc1_b, joined_.data());
        dense(in, layout_.fcu_w, layout_.fcu_b, joined_.data() + width_);
        kernels::tanh_row(joined_.data(), joined_.data(), joined_.size());
        dense(joined_.data(), layout_.fc2_w, layout_.fc2_b, hidden_.data());
        kernels::tanh_row(hidden_.data(), hidden_.data(), hidden_.size());
        dense(hidden_.data(), layout_.fc3_w, layout_.fc3_b, f_.data());
        for (std::size_t j = 0; j < n_; ++j) h_[j] = h_[j] + f_[j] * dtau;
    }

    Matrix logits() const override {
        const Matrix& w = values_[layout_.fcc_w];
        Matrix z(1, w.cols());
        dense(h_.data(), layout_.fcc_w, layout_.fcc_b, z.data());
        return z;
    }

    Matrix state() const { return Matrix(1, n_, h_); }

private:
    // out = x * W, then + b, as matmul followed by add_bias.
    void dense(const double* x, std::size_t w_index, std::size_t b_index, double* out) const {
        const Matrix& w = values_[w_index];
        const Matrix& b = values_[b_index];
        const std::size_t n = w.cols();
        std::fill(out, out + n, 0.0);
        kernels::detail::gemm_acc(x, w.data(), out, 1, w.rows(), n);
        for (std::size_t j = 0; j < n; ++j) out[j] = out[j] + b[j];
    }

    std::vector<Matrix> values_;
    InodeLayout layout_;
    std::size_t n_;
    std::size_t width_ = 0;
    std::vector<double> h_, joined_, hidden_, f_;
};

inline std::unique_ptr<RecurrentCell> InodeModel::make_cell() const { return std::make_unique<InodeCell>(*this); }

}  // namespace inode
