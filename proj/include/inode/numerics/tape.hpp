#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "inode/errors.hpp"
#include "inode/numerics/kernels.hpp"
#include "inode/numerics/matrix.hpp"
#include "inode/numerics/param_store.hpp"

namespace inode {

// Handle to a node on a Tape.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    friend bool operator==(Var, Var) = default;
};

// Append-only record of primitive ops for reverse-mode differentiation.
// Nodes are stored in creation order, which is a topological order, so
// backward() is a single reverse sweep. The tape is built once per batch
// and never mutated by backward(); calling backward() twice gives the same
// gradients.
class Tape {
public:
    enum class Op : std::uint8_t {
        constant,
        parameter,
        matmul,
        add,
        add_bias,
        tanh,
        sigmoid,
        mul,
        concat,
        slice,
        scale_rows,
        scale,
        sum,
        softmax_ce,
    };

    using Value = Var;

    Var constant(Matrix value) { return push(Op::constant, std::move(value), {}, {}, false); }

    Var parameter(std::size_t param_index, Matrix value) {
        Var v = push(Op::parameter, std::move(value), {}, {}, true);
        nodes_[v.id].param_index = param_index;
        return v;
    }

    // One parameter leaf per ParamStore entry, index-aligned.
    std::vector<Var> parameters(const ParamStore& store) {
        std::vector<Var> vars;
        vars.reserve(store.size());
        for (std::size_t i = 0; i < store.size(); ++i) vars.push_back(parameter(i, store[i].value));
        return vars;
    }

    Var matmul(Var a, Var b) { return push(Op::matmul, kernels::matmul(value(a), value(b)), a, b); }
    Var add(Var a, Var b) { return push(Op::add, kernels::add(value(a), value(b)), a, b); }
    Var add_bias(Var x, Var bias) { return push(Op::add_bias, kernels::add_bias(value(x), value(bias)), x, bias); }
    Var tanh(Var x) { return push(Op::tanh, kernels::tanh_forward(value(x)), x, {}); }
    Var sigmoid(Var x) { return push(Op::sigmoid, kernels::sigmoid_forward(value(x)), x, {}); }
    Var mul(Var a, Var b) { return push(Op::mul, kernels::hadamard(value(a), value(b)), a, b); }
    Var concat_cols(Var a, Var b) { return push(Op::concat, kernels::concat_cols(value(a), value(b)), a, b); }

    Var slice_cols(Var x, std::size_t begin, std::size_t count) {
        Var v = push(Op::slice, kernels::slice_cols(value(x), begin, count), x, {});
        nodes_[v.id].offset = begin;
        return v;
    }

    // Rows of x scaled by the matching entry of the column vector s.
    Var scale_rows(Var x, Var s) { return push(Op::scale_rows, kernels::scale_rows(value(x), value(s)), x, s); }

    Var scale(Var x, double c) {
        Var v = push(Op::scale, kernels::scale(value(x), c), x, {});
        nodes_[v.id].factor = c;
        return v;
    }

    Var sum(Var x) { return push(Op::sum, Matrix(1, 1, kernels::sum(value(x))), x, {}); }

    // Mean cross-entropy over rows; a 1x1 node.
    Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
        auto ce = kernels::softmax_cross_entropy(value(logits), labels);
        Var v = push(Op::softmax_ce, Matrix(1, 1, ce.loss), logits, {});
        nodes_[v.id].aux = std::move(ce.probs);
        nodes_[v.id].labels.assign(labels.begin(), labels.end());
        return v;
    }

    const Matrix& value(Var v) const {
        if (v.id >= nodes_.size()) throw UsageError("tape: invalid variable");
        return nodes_[v.id].value;
    }

    std::size_t size() const noexcept { return nodes_.size(); }

    // dLoss/dparam for every parameter leaf; entries for params never placed
    // on the tape stay zero-sized unless a shape template is supplied.
    Gradients backward(Var loss, const ParamStore& store) const {
        Gradients grads = store.zero_gradients();
        backward_into(loss, grads);
        return grads;
    }

    // Accumulates dLoss/dparam into grads (indexed by parameter index).
    void backward_into(Var loss, Gradients& grads) const {
        const Matrix& lv = value(loss);
        if (lv.rows() != 1 || lv.cols() != 1) {
            throw UsageError("backward: loss must be scalar, got " + lv.shape_str());
        }
        std::vector<Matrix> adj(nodes_.size());
        adj[loss.id] = Matrix(1, 1, 1.0);

        for (std::size_t i = loss.id + 1; i-- > 0;) {
            const Node& n = nodes_[i];
            if (adj[i].empty() || !n.needs_grad) continue;
            const Matrix& g = adj[i];
            switch (n.op) {
                case Op::constant:
                    break;
                case Op::parameter: {
                    if (n.param_index >= grads.size()) throw UsageError("backward: parameter index out of range");
                    Matrix& dst = grads[n.param_index];
                    if (dst.empty()) dst = Matrix(g.rows(), g.cols());
                    kernels::add_inplace(dst, g);
                    break;
                }
                case Op::matmul: {
                    const Matrix& a = nodes_[n.a.id].value;
                    const Matrix& b = nodes_[n.b.id].value;
                    if (wants(n.a)) accumulate(adj, n.a, kernels::matmul_nt(g, b));
                    if (wants(n.b)) {
                        Matrix& db = slot(adj, n.b);
                        kernels::matmul_tn_acc(a, g, db);
                    }
                    break;
                }
                case Op::add:
                    if (wants(n.a)) accumulate(adj, n.a, g);
                    if (wants(n.b)) accumulate(adj, n.b, g);
                    break;
                case Op::add_bias:
                    if (wants(n.a)) accumulate(adj, n.a, g);
                    if (wants(n.b)) accumulate(adj, n.b, kernels::column_sums(g));
                    break;
                case Op::tanh: {
                    Matrix d(g.rows(), g.cols());
                    for (std::size_t k = 0; k < g.size(); ++k) d[k] = g[k] * (1.0 - n.value[k] * n.value[k]);
                    accumulate(adj, n.a, d);
                    break;
                }
                case Op::sigmoid: {
                    Matrix d(g.rows(), g.cols());
                    for (std::size_t k = 0; k < g.size(); ++k) d[k] = g[k] * n.value[k] * (1.0 - n.value[k]);
                    accumulate(adj, n.a, d);
                    break;
                }
                case Op::mul:
                    if (wants(n.a)) accumulate(adj, n.a, kernels::hadamard(g, nodes_[n.b.id].value));
                    if (wants(n.b)) accumulate(adj, n.b, kernels::hadamard(g, nodes_[n.a.id].value));
                    break;
                case Op::concat: {
                    const std::size_t left = nodes_[n.a.id].value.cols();
                    if (wants(n.a)) accumulate(adj, n.a, kernels::slice_cols(g, 0, left));
                    if (wants(n.b)) accumulate(adj, n.b, kernels::slice_cols(g, left, g.cols() - left));
                    break;
                }
                case Op::slice: {
                    Matrix& dst = slot(adj, n.a);
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                        auto drow = dst.row(r);
                        const auto grow = g.row(r);
                        for (std::size_t j = 0; j < g.cols(); ++j) drow[n.offset + j] += grow[j];
                    }
                    break;
                }
                case Op::scale_rows: {
                    const Matrix& x = nodes_[n.a.id].value;
                    const Matrix& s = nodes_[n.b.id].value;
                    if (wants(n.a)) accumulate(adj, n.a, kernels::scale_rows(g, s));
                    if (wants(n.b)) {
                        Matrix& ds = slot(adj, n.b);
                        for (std::size_t r = 0; r < g.rows(); ++r) {
                            double acc = 0.0;
                            const auto grow = g.row(r);
                            const auto xrow = x.row(r);
                            for (std::size_t j = 0; j < g.cols(); ++j) acc += grow[j] * xrow[j];
                            ds[r] += acc;
                        }
                    }
                    break;
                }
                case Op::scale:
                    accumulate(adj, n.a, kernels::scale(g, n.factor));
                    break;
                case Op::sum: {
                    const Matrix& x = nodes_[n.a.id].value;
                    accumulate(adj, n.a, Matrix(x.rows(), x.cols(), g[0]));
                    break;
                }
                case Op::softmax_ce: {
                    Matrix d = n.aux;
                    const double f = g[0] / static_cast<double>(d.rows());
                    for (std::size_t r = 0; r < d.rows(); ++r) {
                        d(r, static_cast<std::size_t>(n.labels[r])) -= 1.0;
                        for (double& v : d.row(r)) v *= f;
                    }
                    accumulate(adj, n.a, d);
                    break;
                }
            }
        }
    }

private:
    struct Node {
        Op op;
        Matrix value;
        Var a, b;
        bool needs_grad = false;
        std::size_t param_index = 0;
        std::size_t offset = 0;
        double factor = 1.0;
        Matrix aux;
        std::vector<int> labels;
    };

    Var push(Op op, Matrix value, Var a, Var b, bool leaf_needs_grad = false) {
        Node n{op, std::move(value), a, b};
        n.needs_grad = leaf_needs_grad || wants(a) || wants(b);
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    bool wants(Var v) const noexcept { return v.id < nodes_.size() && nodes_[v.id].needs_grad; }

    Matrix& slot(std::vector<Matrix>& adj, Var v) const {
        Matrix& dst = adj[v.id];
        if (dst.empty()) {
            const Matrix& val = nodes_[v.id].value;
            dst = Matrix(val.rows(), val.cols());
        }
        return dst;
    }

    void accumulate(std::vector<Matrix>& adj, Var v, const Matrix& g) const {
        if (!wants(v)) return;
        Matrix& dst = adj[v.id];
        if (dst.empty()) {
            dst = g;
        } else {
            kernels::add_inplace(dst, g);
        }
    }

    std::vector<Node> nodes_;
};

// Same op names as Tape but computes values directly; used for inference.
struct EagerOps {
    using Value = Matrix;

    Matrix matmul(const Matrix& a, const Matrix& b) const { return kernels::matmul(a, b); }
    Matrix add(const Matrix& a, const Matrix& b) const { return kernels::add(a, b); }
    Matrix add_bias(const Matrix& x, const Matrix& bias) const { return kernels::add_bias(x, bias); }
    Matrix tanh(const Matrix& x) const { return kernels::tanh_forward(x); }
    Matrix sigmoid(const Matrix& x) const { return kernels::sigmoid_forward(x); }
    Matrix mul(const Matrix& a, const Matrix& b) const { return kernels::hadamard(a, b); }
    Matrix concat_cols(const Matrix& a, const Matrix& b) const { return kernels::concat_cols(a, b); }
    Matrix slice_cols(const Matrix& x, std::size_t begin, std::size_t count) const {
        return kernels::slice_cols(x, begin, count);
    }
    Matrix scale_rows(const Matrix& x, const Matrix& s) const { return kernels::scale_rows(x, s); }
    Matrix scale(const Matrix& x, double c) const { return kernels::scale(x, c); }
    Matrix constant(Matrix m) const { return m; }
    const Matrix& value(const Matrix& m) const { return m; }
    Matrix softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) const {
        return Matrix(1, 1, kernels::softmax_cross_entropy(logits, labels).loss);
    }
};

}  // namespace inode
