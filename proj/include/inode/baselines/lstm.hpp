#pragma once

// LSTM and bidirectional LSTM baselines. Inputs carry the normalized step as a
// fourth feature. Gate weights are fused as [i | f | g | o] column blocks.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "inode/model/inode.hpp"
#include "inode/model/sequence_model.hpp"
#include "inode/numerics/tape.hpp"
#include "inode/preprocess/features.hpp"

namespace inode {

template <class V>
struct LstmState {
    V h;
    V c;
};

struct LstmWeights {
    std::size_t w, u, b;

    static LstmWeights of(const ParamStore& s, const std::string& prefix) {
        return {s.index_of(prefix + ".w"), s.index_of(prefix + ".u"), s.index_of(prefix + ".b")};
    }
};

template <class Ops>
LstmState<typename Ops::Value> lstm_step(Ops& ops, const LstmState<typename Ops::Value>& s,
                                         const typename Ops::Value& x, const std::vector<typename Ops::Value>& p,
                                         const LstmWeights& lw, std::size_t hidden) {
    const auto z = ops.add_bias(ops.add(ops.matmul(x, p[lw.w]), ops.matmul(s.h, p[lw.u])), p[lw.b]);
    const auto i = ops.sigmoid(ops.slice_cols(z, 0, hidden));
    const auto f = ops.sigmoid(ops.slice_cols(z, hidden, hidden));
    const auto g = ops.tanh(ops.slice_cols(z, 2 * hidden, hidden));
    const auto o = ops.sigmoid(ops.slice_cols(z, 3 * hidden, hidden));
    auto c = ops.add(ops.mul(f, s.c), ops.mul(i, g));
    auto h = ops.mul(o, ops.tanh(c));
    return {std::move(h), std::move(c)};
}

inline void add_lstm(ParamStore& s, const std::string& prefix, std::size_t in, std::size_t hidden,
                     std::mt19937_64& rng) {
    s.add(prefix + ".w", init_weight(in, 4 * hidden, rng));
    s.add(prefix + ".u", init_weight(hidden, 4 * hidden, rng));
    s.add(prefix + ".b", Matrix(1, 4 * hidden));
}

inline ParamStore init_lstm_params(const ModelSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ParamStore s;
    const std::size_t h = spec.state_dim;
    if (spec.kind == ModelKind::bilstm) {
        add_lstm(s, "fwd", spec.input_features, h, rng);
        add_lstm(s, "bwd", spec.input_features, h, rng);
        add_dense(s, "cls", 2 * h, spec.classes, rng);
    } else {
        add_lstm(s, "lstm", spec.input_features, h, rng);
        add_dense(s, "cls", h, spec.classes, rng);
    }
    return s;
}

// Scalar count of the recurrent core(s), excluding the classifier.
inline std::size_t lstm_core_count(const ParamStore& s) {
    std::size_t n = 0;
    for (const auto& p : s)
        if (p.name.rfind("cls.", 0) != 0) n += p.value.size();
    return n;
}

class LstmModelBase : public SequenceModel {
public:
    const ModelSpec& spec() const override { return spec_; }
    ParamStore& params() override { return params_; }
    const ParamStore& params() const override { return params_; }

protected:
    LstmModelBase(ModelSpec spec, ParamStore params) : spec_(std::move(spec)), params_(std::move(params)) {
        cls_w_ = params_.index_of("cls.w");
        cls_b_ = params_.index_of("cls.b");
    }

    void check_shapes(const std::vector<std::string>& prefixes) const {
        const std::size_t h = spec_.state_dim;
        auto expect = [&](const std::string& name, std::size_t r, std::size_t c) {
            const Matrix& m = params_.value(name);
            if (m.rows() != r || m.cols() != c) {
                throw ShapeError("parameter " + name + " is " + m.shape_str() + ", expected " + std::to_string(r) +
                                 "x" + std::to_string(c));
            }
        };
        for (const auto& p : prefixes) {
            expect(p + ".w", spec_.input_features, 4 * h);
            expect(p + ".u", h, 4 * h);
            expect(p + ".b", 1, 4 * h);
        }
        expect("cls.w", prefixes.size() * h, spec_.classes);
        expect("cls.b", 1, spec_.classes);
    }

    void check_batch(const Batch& batch) const {
        if (batch.steps() == 0) throw InputError("batch has no steps");
        if (batch.features() != spec_.input_features) {
            throw ShapeError("batch has " + std::to_string(batch.features()) + " features, model expects " +
                             std::to_string(spec_.input_features));
        }
    }

    template <class Ops>
    LstmState<typename Ops::Value> zero_state(Ops& ops, std::size_t rows) const {
        return {ops.constant(Matrix(rows, spec_.state_dim)), ops.constant(Matrix(rows, spec_.state_dim))};
    }

    template <class Ops>
    typename Ops::Value classify(Ops& ops, const std::vector<typename Ops::Value>& p,
                                 const typename Ops::Value& features) const {
        return ops.add_bias(ops.matmul(features, p[cls_w_]), p[cls_b_]);
    }

    ModelSpec spec_;
    ParamStore params_;
    std::size_t cls_w_ = 0, cls_b_ = 0;
};

class LstmModel final : public LstmModelBase {
public:
    LstmModel(ModelSpec spec, ParamStore params) : LstmModelBase(fixed(std::move(spec)), std::move(params)) {
        check_shapes({"lstm"});
        weights_ = LstmWeights::of(params_, "lstm");
    }

    static LstmModel create(ModelSpec spec, std::uint64_t seed) {
        spec = fixed(std::move(spec));
        auto params = init_lstm_params(spec, seed);
        return LstmModel(std::move(spec), std::move(params));
    }

    template <class Ops>
    typename Ops::Value run(Ops& ops, const std::vector<typename Ops::Value>& p, const Batch& batch, std::size_t steps,
                            std::vector<typename Ops::Value>* step_logits, bool with_loss) const {
        auto s = zero_state(ops, batch.batch_size());
        typename Ops::Value total{};
        for (std::size_t i = 0; i < steps; ++i) {
            s = lstm_step(ops, s, ops.constant(batch.inputs[i]), p, weights_, spec_.state_dim);
            auto z = classify(ops, p, s.h);
            if (with_loss) {
                auto li = ops.softmax_cross_entropy(z, batch.labels);
                total = i == 0 ? li : ops.add(total, li);
            }
            if (step_logits) step_logits->push_back(std::move(z));
        }
        return with_loss ? ops.scale(total, 1.0 / static_cast<double>(steps)) : total;
    }

    Var record(Tape& tape, const Batch& batch) const {
        check_batch(batch);
        return run(tape, tape.parameters(params_), batch, batch.steps(), nullptr, true);
    }

    LossAndGradients loss_and_gradients(const Batch& batch) const override {
        Tape tape;
        const Var loss = record(tape, batch);
        return {tape.value(loss)[0], tape.backward(loss, params_)};
    }

    double loss(const Batch& batch) const override {
        check_batch(batch);
        EagerOps ops;
        return run(ops, copy_values(params_), batch, batch.steps(), nullptr, true)[0];
    }

    std::vector<Matrix> logits_at(const Batch& batch, std::span<const std::size_t> prefix_lengths) const override {
        check_batch(batch);
        std::size_t longest = 0;
        for (auto n : prefix_lengths) longest = std::max(longest, n);
        if (longest > batch.steps()) throw InputError("prefix longer than the batch");
        EagerOps ops;
        std::vector<Matrix> all;
        run(ops, copy_values(params_), batch, longest, &all, false);
        std::vector<Matrix> out;
        for (auto n : prefix_lengths) {
            if (n == 0) throw InputError("prefix length must be >= 1");
            out.push_back(all[n - 1]);
        }
        return out;
    }

    std::unique_ptr<RecurrentCell> make_cell() const override;

    const LstmWeights& weights() const noexcept { return weights_; }
    std::size_t classifier_w() const noexcept { return cls_w_; }
    std::size_t classifier_b() const noexcept { return cls_b_; }

private:
    static ModelSpec fixed(ModelSpec s) {
        s.kind = ModelKind::lstm;
        return s;
    }

    LstmWeights weights_{};
};

class LstmCell final : public RecurrentCell {
public:
    explicit LstmCell(const LstmModel& m)
        : values_(copy_values(m.params())),
          weights_(m.weights()),
          hidden_(m.spec().state_dim),
          with_dt_(m.uses_dt_feature()),
          cls_w_(m.classifier_w()),
          cls_b_(m.classifier_b()) {
        reset();
    }

    void reset() override { state_ = {Matrix(1, hidden_), Matrix(1, hidden_)}; }

    void step(const InputVector& u, double dtau) override {
        const Matrix x = with_dt_ ? Matrix{{u.x, u.y, u.p, dtau}} : Matrix{{u.x, u.y, u.p}};
        state_ = lstm_step(ops_, state_, x, values_, weights_, hidden_);
    }

    Matrix logits() const override { return ops_.add_bias(ops_.matmul(state_.h, values_[cls_w_]), values_[cls_b_]); }

private:
    EagerOps ops_;
    std::vector<Matrix> values_;
    LstmWeights weights_;
    std::size_t hidden_;
    bool with_dt_;
    std::size_t cls_w_, cls_b_;
    LstmState<Matrix> state_;
};

inline std::unique_ptr<RecurrentCell> LstmModel::make_cell() const { return std::make_unique<LstmCell>(*this); }

// Classifies from [h_fwd(n), h_bwd(n)]: the forward pass reads steps 0..n-1,
// the backward pass reads them in reverse. Trained on the final state only.
class BiLstmModel final : public LstmModelBase {
public:
    BiLstmModel(ModelSpec spec, ParamStore params) : LstmModelBase(fixed(std::move(spec)), std::move(params)) {
        check_shapes({"fwd", "bwd"});
        fwd_ = LstmWeights::of(params_, "fwd");
        bwd_ = LstmWeights::of(params_, "bwd");
    }

    static BiLstmModel create(ModelSpec spec, std::uint64_t seed) {
        spec = fixed(std::move(spec));
        auto params = init_lstm_params(spec, seed);
        return BiLstmModel(std::move(spec), std::move(params));
    }

    // Final states of both directions over the first n steps.
    template <class Ops>
    std::pair<typename Ops::Value, typename Ops::Value> final_states(Ops& ops,
                                                                     const std::vector<typename Ops::Value>& p,
                                                                     const Batch& batch, std::size_t n) const {
        std::vector<typename Ops::Value> xs;
        xs.reserve(n);
        for (std::size_t i = 0; i < n; ++i) xs.push_back(ops.constant(batch.inputs[i]));
        auto f = zero_state(ops, batch.batch_size());
        auto b = zero_state(ops, batch.batch_size());
        for (std::size_t i = 0; i < n; ++i) {
            f = lstm_step(ops, f, xs[i], p, fwd_, spec_.state_dim);
            b = lstm_step(ops, b, xs[n - 1 - i], p, bwd_, spec_.state_dim);
        }
        return {f.h, b.h};
    }

    template <class Ops>
    typename Ops::Value logits_for(Ops& ops, const std::vector<typename Ops::Value>& p, const Batch& batch,
                                   std::size_t n) const {
        const auto [hf, hb] = final_states(ops, p, batch, n);
        return classify(ops, p, ops.concat_cols(hf, hb));
    }

    Var record(Tape& tape, const Batch& batch) const {
        check_batch(batch);
        const auto p = tape.parameters(params_);
        return tape.softmax_cross_entropy(logits_for(tape, p, batch, batch.steps()), batch.labels);
    }

    LossAndGradients loss_and_gradients(const Batch& batch) const override {
        Tape tape;
        const Var loss = record(tape, batch);
        return {tape.value(loss)[0], tape.backward(loss, params_)};
    }

    double loss(const Batch& batch) const override {
        check_batch(batch);
        EagerOps ops;
        const auto p = copy_values(params_);
        return ops.softmax_cross_entropy(logits_for(ops, p, batch, batch.steps()), batch.labels)[0];
    }

    std::vector<Matrix> logits_at(const Batch& batch, std::span<const std::size_t> prefix_lengths) const override {
        check_batch(batch);
        EagerOps ops;
        const auto p = copy_values(params_);
        std::vector<Matrix> out;
        for (auto n : prefix_lengths) {
            if (n == 0) throw InputError("prefix length must be >= 1");
            if (n > batch.steps()) throw InputError("prefix longer than the batch");
            out.push_back(logits_for(ops, p, batch, n));
        }
        return out;
    }

    std::unique_ptr<RecurrentCell> make_cell() const override { return nullptr; }

private:
    static ModelSpec fixed(ModelSpec s) {
        s.kind = ModelKind::bilstm;
        return s;
    }

    LstmWeights fwd_{}, bwd_{};
};

}  // namespace inode
