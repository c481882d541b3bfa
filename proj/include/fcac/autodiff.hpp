#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records every operation applied to its Vars. Calling backward() on
// a 1x1 Var walks the record in reverse and accumulates gradients; Vars
// created from a Parameter forward their gradient into Parameter::grad.
//
// Spatial activations use a "pixel rows" layout: a batch of B maps of
// H x W with C channels is a (B*H*W) x C matrix, row ((b*H)+y)*W + x.

#include "fcac/core.hpp"

#include <functional>
#include <string>
#include <vector>

namespace fcac::ad {

struct Parameter {
    Matrix value;
    Matrix grad;
    Matrix velocity;

    Parameter() = default;
    explicit Parameter(Matrix v) : value(std::move(v)) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
public:
    Var() = default;

    const Matrix& value() const;
    /// Gradient after backward(); zero matrix if nothing flowed here.
    Matrix grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, int self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    /// Leaf bound to `p`. If `trainable` is false the leaf behaves as a constant.
    Var parameter(Parameter& p, bool trainable = true);

    /// Reverse pass from a 1x1 Var. Parameter gradients are accumulated, not overwritten.
    void backward(const Var& scalar);

    // operation authoring interface
    Var record(Matrix value, std::vector<int> parents, Backward backward);
    const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    const Matrix& grad_of(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    /// grad[id] += delta, allocating on first use. No-op for nodes without gradient.
    template <typename Derived>
    void accumulate(int id, const Eigen::MatrixBase<Derived>& delta)
    {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad) return;
        if (n.grad.size() == 0)
            n.grad = delta;
        else
            n.grad += delta;
    }

    std::size_t size() const { return nodes_.size(); }

private:
    friend class Var;
    struct Node {
        Matrix value;
        Matrix grad;
        std::vector<int> parents;
        Backward backward;
        Parameter* param = nullptr;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
};

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
/// Adds a 1 x C row to every row of `a`.
Var add_row(const Var& a, const Var& row);
Var scale(const Var& a, double s);
Var relu(const Var& a);
/// Elementwise product with a fixed mask (dropout).
Var mask(const Var& a, const Matrix& m);
Var gather_rows(const Var& a, const std::vector<int>& rows);
Var concat_rows(const Var& a, const Var& b);
/// Row b*C + c of the result equals a.row(b) + c.row(c).
Var pairwise_sum(const Var& a, const Var& c);
/// (B*C) x 1 column to B x C, element (b, c) from row b*C + c.
Var unflatten(const Var& a, Eigen::Index rows, Eigen::Index cols);
Var row_softmax(const Var& a);
/// Mean softmax cross-entropy of `logits` (B x C) against class indices.
Var cross_entropy(const Var& logits, const std::vector<int>& targets);
Var sum(const std::vector<Var>& terms);

/// Column-wise normalization using the batch statistics; writes the batch
/// mean and (biased) variance to the out-parameters.
Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta, double eps,
                     RowVector* batch_mean, RowVector* batch_var);
/// Column-wise normalization using stored statistics.
Var batch_norm_eval(const Var& x, const Var& gamma, const Var& beta, const RowVector& mean,
                    const RowVector& var, double eps);

struct MapShape {
    Eigen::Index batch = 0;
    Eigen::Index height = 0;
    Eigen::Index width = 0;
    Eigen::Index pixels() const { return batch * height * width; }
};

/// 3x3 patches with zero padding: (B*H*W) x C to (B*H*W) x 9C.
Var im2col3x3(const Var& x, const MapShape& shape);
/// 2x2 max pooling, stride 2, floor on odd extents.
Var max_pool2(const Var& x, const MapShape& shape);
MapShape pooled(const MapShape& shape);
/// Mean over the H*W rows of each map: (B*H*W) x C to B x C.
Var global_avg_pool(const Var& x, const MapShape& shape);

} // namespace fcac::ad
