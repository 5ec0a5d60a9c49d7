#include "dfsp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dfsp/errors.hpp"

namespace dfsp {

Parameter::Parameter(std::string name_, Matrix value_, bool trainable_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.rows(), value.cols()),
      trainable(trainable_) {}

void Parameter::zero_grad() {
    if (!grad.same_shape(value)) grad = Matrix(value.rows(), value.cols());
    std::fill(grad.data().begin(), grad.data().end(), 0.0);
}

const Matrix& Var::value() const { return tape_->value(*this); }

// ---- Tape ------------------------------------------------------------------

namespace {

void require_finite(const Matrix& m, const char* what) {
    if (!m.all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

}  // namespace

void Tape::check_owner(Var v) const {
    if (v.tape_ != this || v.id_ >= nodes_.size()) {
        throw std::logic_error("Var does not belong to this tape");
    }
}

Var Tape::constant(Matrix value) {
    require_finite(value, "constant");
    nodes_.push_back(Node{std::move(value), {}, false, false, nullptr, {}});
    return {this, nodes_.size() - 1};
}

Var Tape::leaf(Parameter& p) {
    require_finite(p.value, p.name.c_str());
    nodes_.push_back(Node{p.value, {}, p.trainable, false, p.trainable ? &p : nullptr, {}});
    return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::span<const Var> parents, BackwardFn fn) {
    require_finite(value, "op output");
    bool needs = false;
    for (Var p : parents) {
        check_owner(p);
        needs = needs || nodes_[p.id_].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs, false, nullptr,
                          needs ? std::move(fn) : BackwardFn{}});
    return {this, nodes_.size() - 1};
}

void Tape::accumulate(Var v, const Matrix& g) {
    check_owner(v);
    Node& n = nodes_[v.id_];
    if (!n.needs_grad) return;
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
    } else {
        n.grad += g;
    }
}

void Tape::backward(Var root) {
    check_owner(root);
    if (consumed_) throw std::logic_error("backward() already ran on this tape");
    if (nodes_[root.id_].value.size() != 1) {
        throw ShapeError("backward root must be 1x1, got " + nodes_[root.id_].value.shape_str());
    }
    consumed_ = true;
    accumulate(root, Matrix(1, 1, 1.0));
    for (std::size_t i = root.id_ + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad) continue;
        if (n.backward) n.backward(*this, n.value, n.grad);
        if (n.param != nullptr) {
            if (!n.param->grad.same_shape(n.param->value)) n.param->zero_grad();
            n.param->grad += n.grad;
        }
    }
}

// ---- ops -------------------------------------------------------------------

namespace {

void same_tape(Var a, Var b) {
    if (&a.tape() != &b.tape()) throw std::logic_error("operands recorded on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
    same_tape(a, b);
    Var parents[] = {a, b};
    return a.tape().record(matmul(a.value(), b.value()), parents,
                           [a, b](Tape& t, const Matrix&, const Matrix& g) {
                               if (t.needs_grad(a)) t.accumulate(a, matmul_nt(g, b.value()));
                               if (t.needs_grad(b)) t.accumulate(b, matmul_tn(a.value(), g));
                           });
}

Var transpose(Var a) {
    Var parents[] = {a};
    return a.tape().record(transpose(a.value()), parents,
                           [a](Tape& t, const Matrix&, const Matrix& g) {
                               t.accumulate(a, transpose(g));
                           });
}

Var add(Var a, Var b) {
    same_tape(a, b);
    if (!a.value().same_shape(b.value())) {
        throw ShapeError("add: " + a.value().shape_str() + " vs " + b.value().shape_str());
    }
    Matrix out = a.value();
    out += b.value();
    Var parents[] = {a, b};
    return a.tape().record(std::move(out), parents,
                           [a, b](Tape& t, const Matrix&, const Matrix& g) {
                               t.accumulate(a, g);
                               t.accumulate(b, g);
                           });
}

Var add_row(Var a, Var bias) {
    same_tape(a, bias);
    const Matrix& av = a.value();
    const Matrix& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != av.cols()) {
        throw ShapeError("add_row: " + av.shape_str() + " + " + bv.shape_str());
    }
    Matrix out = av;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(0, c);
    Var parents[] = {a, bias};
    return a.tape().record(std::move(out), parents,
                           [a, bias](Tape& t, const Matrix&, const Matrix& g) {
                               t.accumulate(a, g);
                               if (!t.needs_grad(bias)) return;
                               Matrix gb(1, g.cols());
                               for (std::size_t r = 0; r < g.rows(); ++r)
                                   for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
                               t.accumulate(bias, gb);
                           });
}

Var mul(Var a, Var b) {
    same_tape(a, b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (!av.same_shape(bv)) throw ShapeError("mul: " + av.shape_str() + " vs " + bv.shape_str());
    Matrix out(av.rows(), av.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    Var parents[] = {a, b};
    return a.tape().record(std::move(out), parents,
                           [a, b](Tape& t, const Matrix&, const Matrix& g) {
                               const Matrix& av = a.value();
                               const Matrix& bv = b.value();
                               if (t.needs_grad(a)) {
                                   Matrix ga(g.rows(), g.cols());
                                   for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bv[i];
                                   t.accumulate(a, ga);
                               }
                               if (t.needs_grad(b)) {
                                   Matrix gb(g.rows(), g.cols());
                                   for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * av[i];
                                   t.accumulate(b, gb);
                               }
                           });
}

Var scale(Var a, double s) {
    Matrix out = a.value();
    out *= s;
    Var parents[] = {a};
    return a.tape().record(std::move(out), parents,
                           [a, s](Tape& t, const Matrix&, const Matrix& g) {
                               Matrix ga = g;
                               ga *= s;
                               t.accumulate(a, ga);
                           });
}

Var tanh(Var a) {
    Matrix out = a.value();
    for (double& v : out.data()) v = std::tanh(v);
    Var parents[] = {a};
    return a.tape().record(std::move(out), parents,
                           [a](Tape& t, const Matrix& y, const Matrix& g) {
                               Matrix ga(g.rows(), g.cols());
                               for (std::size_t i = 0; i < g.size(); ++i)
                                   ga[i] = g[i] * (1.0 - y[i] * y[i]);
                               t.accumulate(a, ga);
                           });
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    Var parents[] = {a};
    return a.tape().record(Matrix(1, 1, s), parents,
                           [a](Tape& t, const Matrix&, const Matrix& g) {
                               t.accumulate(a, Matrix(a.rows(), a.cols(), g[0]));
                           });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t cols = parts[0].cols();
    std::size_t rows = 0;
    for (Var p : parts) {
        same_tape(parts[0], p);
        if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
        rows += p.rows();
    }
    Matrix out(rows, cols);
    std::size_t r0 = 0;
    for (Var p : parts) {
        const Matrix& v = p.value();
        std::copy(v.data().begin(), v.data().end(), out.data().begin() + r0 * cols);
        r0 += v.rows();
    }
    std::vector<Var> saved(parts.begin(), parts.end());
    return parts[0].tape().record(std::move(out), parts,
                                  [saved](Tape& t, const Matrix&, const Matrix& g) {
                                      std::size_t r0 = 0;
                                      for (Var p : saved) {
                                          const std::size_t n = p.rows() * g.cols();
                                          if (t.needs_grad(p)) {
                                              std::vector<double> chunk(
                                                  g.data().begin() + r0 * g.cols(),
                                                  g.data().begin() + r0 * g.cols() + n);
                                              t.accumulate(p, Matrix(p.rows(), g.cols(), std::move(chunk)));
                                          }
                                          r0 += p.rows();
                                      }
                                  });
}

Var select_rows(Var a, std::span<const std::size_t> idx) {
    const Matrix& av = a.value();
    Matrix out(idx.size(), av.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= av.rows()) {
            throw ShapeError("select_rows: index " + std::to_string(idx[i]) + " out of " +
                             std::to_string(av.rows()) + " rows");
        }
        std::copy(av.row(idx[i]).begin(), av.row(idx[i]).end(), out.row(i).begin());
    }
    std::vector<std::size_t> saved(idx.begin(), idx.end());
    Var parents[] = {a};
    return a.tape().record(std::move(out), parents,
                           [a, saved](Tape& t, const Matrix&, const Matrix& g) {
                               Matrix ga(a.rows(), a.cols());
                               for (std::size_t i = 0; i < saved.size(); ++i) {
                                   auto dst = ga.row(saved[i]);
                                   auto src = g.row(i);
                                   for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                               }
                               t.accumulate(a, ga);
                           });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
    if (begin + count > a.rows()) throw ShapeError("slice_rows: range out of bounds");
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = begin + i;
    return select_rows(a, idx);
}

Var mean_rows_by_group(Var a, std::span<const std::size_t> groups, std::size_t num_groups) {
    const Matrix& av = a.value();
    if (groups.size() != av.rows()) {
        throw ShapeError("mean_rows_by_group: " + std::to_string(groups.size()) +
                         " group tags for " + std::to_string(av.rows()) + " rows");
    }
    std::vector<std::size_t> counts(num_groups, 0);
    for (std::size_t g : groups) {
        if (g >= num_groups) throw ShapeError("mean_rows_by_group: group tag out of range");
        ++counts[g];
    }
    for (std::size_t g = 0; g < num_groups; ++g) {
        if (counts[g] == 0) {
            throw NumericError("mean_rows_by_group: group " + std::to_string(g) + " is empty");
        }
    }
    Matrix out(num_groups, av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        auto dst = out.row(groups[r]);
        auto src = av.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
    for (std::size_t g = 0; g < num_groups; ++g)
        for (double& v : out.row(g)) v /= static_cast<double>(counts[g]);

    std::vector<std::size_t> saved(groups.begin(), groups.end());
    Var parents[] = {a};
    return a.tape().record(std::move(out), parents,
                           [a, saved, counts](Tape& t, const Matrix&, const Matrix& g) {
                               Matrix ga(a.rows(), a.cols());
                               for (std::size_t r = 0; r < saved.size(); ++r) {
                                   const double inv = 1.0 / static_cast<double>(counts[saved[r]]);
                                   auto src = g.row(saved[r]);
                                   auto dst = ga.row(r);
                                   for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c] * inv;
                               }
                               t.accumulate(a, ga);
                           });
}

Var mean_rows(Var a) {
    std::vector<std::size_t> zeros(a.rows(), 0);
    return mean_rows_by_group(a, zeros, 1);
}

Var softmax_rows(Var a) {
    const Matrix& av = a.value();
    if (av.cols() == 0) throw ShapeError("softmax_rows: zero columns");
    Matrix out(av.rows(), av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        auto x = av.row(r);
        auto y = out.row(r);
        const double mx = *std::max_element(x.begin(), x.end());
        double z = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) z += (y[c] = std::exp(x[c] - mx));
        for (double& v : y) v /= z;
    }
    Var parents[] = {a};
    return a.tape().record(std::move(out), parents,
                           [a](Tape& t, const Matrix& y, const Matrix& g) {
                               Matrix ga(g.rows(), g.cols());
                               for (std::size_t r = 0; r < g.rows(); ++r) {
                                   const double s = dot(g.row(r), y.row(r));
                                   for (std::size_t c = 0; c < g.cols(); ++c)
                                       ga(r, c) = y(r, c) * (g(r, c) - s);
                               }
                               t.accumulate(a, ga);
                           });
}

Var l2_normalize_rows(Var a) {
    const Matrix& av = a.value();
    Matrix out(av.rows(), av.cols());
    std::vector<double> norms(av.rows());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        const double n = norm(av.row(r));
        if (!(n > kNormEpsilon)) {
            throw NumericError("l2_normalize_rows: row " + std::to_string(r) + " has zero norm");
        }
        norms[r] = n;
        for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = av(r, c) / n;
    }
    Var parents[] = {a};
    return a.tape().record(std::move(out), parents,
                           [a, norms](Tape& t, const Matrix& y, const Matrix& g) {
                               Matrix ga(g.rows(), g.cols());
                               for (std::size_t r = 0; r < g.rows(); ++r) {
                                   const double s = dot(g.row(r), y.row(r));
                                   for (std::size_t c = 0; c < g.cols(); ++c)
                                       ga(r, c) = (g(r, c) - y(r, c) * s) / norms[r];
                               }
                               t.accumulate(a, ga);
                           });
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
    const Matrix& lv = logits.value();
    if (labels.size() != lv.rows()) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(lv.rows()) + " rows");
    }
    if (lv.rows() == 0) throw ShapeError("cross_entropy: empty batch");
    Matrix probs(lv.rows(), lv.cols());
    double loss = 0.0;
    for (std::size_t r = 0; r < lv.rows(); ++r) {
        if (labels[r] >= lv.cols()) {
            throw ShapeError("cross_entropy: label " + std::to_string(labels[r]) + " out of " +
                             std::to_string(lv.cols()) + " classes");
        }
        auto x = lv.row(r);
        const double mx = *std::max_element(x.begin(), x.end());
        double z = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) z += (probs(r, c) = std::exp(x[c] - mx));
        for (double& p : probs.row(r)) p /= z;
        loss += std::log(z) + mx - x[labels[r]];
    }
    const double inv_b = 1.0 / static_cast<double>(lv.rows());
    std::vector<std::size_t> saved(labels.begin(), labels.end());
    Var parents[] = {logits};
    return logits.tape().record(Matrix(1, 1, loss * inv_b), parents,
                                [logits, saved, probs = std::move(probs), inv_b](
                                    Tape& t, const Matrix&, const Matrix& g) {
                                    Matrix ga = probs;
                                    for (std::size_t r = 0; r < saved.size(); ++r) ga(r, saved[r]) -= 1.0;
                                    ga *= g[0] * inv_b;
                                    t.accumulate(logits, ga);
                                });
}

Var mlp_apply(Var x, const MlpVars& mlp) {
    Var hidden = tanh(add_row(matmul(x, mlp.w1), mlp.b1));
    return add(x, add_row(matmul(hidden, mlp.w2), mlp.b2));
}

// ---- grad_check --------------------------------------------------------------

GradCheckReport grad_check(const LossBuilder& loss, std::span<Parameter* const> params,
                           const GradCheckOptions& opts, const GradientHook& after_backward) {
    if (!(opts.step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

    for (Parameter* p : params) p->zero_grad();
    {
        Tape tape;
        tape.backward(loss(tape));
    }
    if (after_backward) after_backward(params);

    auto eval = [&loss]() {
        Tape tape;
        const double v = loss(tape).value()[0];
        if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss at perturbed point");
        return v;
    };

    GradCheckReport report;
    for (Parameter* p : params) {
        GradCheckGroup group{p->name};
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double orig = p->value[i];
            p->value[i] = orig + opts.step;
            const double up = eval();
            p->value[i] = orig - opts.step;
            const double down = eval();
            p->value[i] = orig;

            const double numeric = (up - down) / (2.0 * opts.step);
            const double analytic = p->grad[i];
            const double denom =
                std::max({std::abs(analytic), std::abs(numeric), opts.abs_floor});
            const double rel = std::abs(analytic - numeric) / denom;
            if (i == 0 || rel > group.max_rel_error) {
                group.max_rel_error = rel;
                group.worst_index = i;
                group.analytic = analytic;
                group.numeric = numeric;
            }
        }
        if (group.max_rel_error >= report.max_rel_error) {
            report.max_rel_error = group.max_rel_error;
            report.worst_group = group.name;
        }
        report.groups.push_back(std::move(group));
    }
    report.passed = report.max_rel_error < opts.tolerance;
    return report;
}

}  // namespace dfsp
