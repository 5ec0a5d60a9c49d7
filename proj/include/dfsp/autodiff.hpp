#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records one forward pass. Every op appends a node whose parents
// already exist, so node order is a topological order and backward() walks
// it in reverse exactly once. Trainable leaves are Parameters; their
// gradients accumulate into Parameter::grad.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dfsp/matrix.hpp"

namespace dfsp {

struct Parameter {
    Parameter() = default;
    Parameter(std::string name, Matrix value, bool trainable = true);

    std::string name;
    Matrix value;
    Matrix grad;
    bool trainable = true;

    void zero_grad();
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using BackwardFn =
        std::function<void(Tape&, const Matrix& out_value, const Matrix& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    // Leaf bound to p. Frozen parameters behave like constants.
    Var leaf(Parameter& p);
    // Appends an op result. fn is only invoked when some parent needs a gradient.
    Var record(Matrix value, std::span<const Var> parents, BackwardFn fn);

    const Matrix& value(Var v) const { return nodes_[v.id_].value; }
    bool needs_grad(Var v) const { return nodes_[v.id_].needs_grad; }
    void accumulate(Var v, const Matrix& g);

    // Seeds d(root)/d(root) = 1; root must be 1x1. One call per tape.
    void backward(Var root);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool needs_grad = false;
        bool has_grad = false;
        Parameter* param = nullptr;
        BackwardFn backward;
    };

    void check_owner(Var v) const;

    std::deque<Node> nodes_;
    bool consumed_ = false;
};

// ---- primitive ops -------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
// a (r x c) + bias (1 x c) broadcast over rows. The only broadcast allowed.
Var add_row(Var a, Var bias);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var tanh(Var a);
Var sum(Var a);
Var concat_rows(std::span<const Var> parts);
// Gather rows by index; repeated indices scatter-add on the way back.
Var select_rows(Var a, std::span<const std::size_t> idx);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
// Row g of the result is the mean of the rows of a tagged with group g.
// Throws NumericError if a group is empty.
Var mean_rows_by_group(Var a, std::span<const std::size_t> groups, std::size_t num_groups);
Var mean_rows(Var a);
Var softmax_rows(Var a);
Var l2_normalize_rows(Var a);
// Mean over rows of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const std::size_t> labels);

inline constexpr double kNormEpsilon = 1e-12;

/// Two-layer perceptron with a residual path:
///   y = x + tanh(x W1 + b1) W2 + b2
/// With W2 = 0 and b2 = 0 it is the identity map.
struct MlpVars {
    Var w1, b1, w2, b2;
};
Var mlp_apply(Var x, const MlpVars& mlp);

// ---- finite-difference oracle ---------------------------------------------

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    // Denominator floor for the relative error so near-zero gradients
    // compare on an absolute scale.
    double abs_floor = 1e-6;
};

struct GradCheckGroup {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double max_rel_error = 0.0;
    std::string worst_group;
    bool passed = false;
};

using LossBuilder = std::function<Var(Tape&)>;
using GradientHook = std::function<void(std::span<Parameter* const>)>;

/// Compares reverse-mode gradients of a scalar loss against central
/// differences (f(x+h) - f(x-h)) / 2h over every coordinate of params.
/// `after_backward` may tamper with the analytic gradients (negative tests).
GradCheckReport grad_check(const LossBuilder& loss, std::span<Parameter* const> params,
                           const GradCheckOptions& opts = {},
                           const GradientHook& after_backward = {});

}  // namespace dfsp
