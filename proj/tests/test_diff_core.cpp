#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "dfsp/autodiff.hpp"
#include "dfsp/errors.hpp"
#include "support.hpp"

using namespace dfsp;

namespace {

Matrix rnd(std::size_t r, std::size_t c, std::uint64_t seed) {
    Rng rng = make_rng(seed, 99);
    return gaussian_matrix(r, c, 1.0, rng);
}

// Projects an arbitrary-shaped output to a scalar with fixed random weights so
// every output entry contributes a distinct gradient.
Var weighted_sum(Tape& t, Var y, std::uint64_t seed) {
    return sum(mul(y, t.constant(rnd(y.rows(), y.cols(), seed + 1000))));
}

void expect_grads(const std::function<Var(Tape&, std::vector<Var>&)>& op, std::vector<Parameter> params) {
    std::vector<Parameter*> ptrs;
    for (Parameter& p : params) ptrs.push_back(&p);
    auto loss = [&](Tape& t) {
        std::vector<Var> leaves;
        for (Parameter& p : params) leaves.push_back(t.leaf(p));
        return weighted_sum(t, op(t, leaves), 7);
    };
    const GradCheckReport r = grad_check(loss, ptrs);
    CHECK_MESSAGE(r.passed, "worst " << r.worst_group << " rel " << r.max_rel_error);
}

}  // namespace

TEST_CASE("matrix products agree with the naive triple loop") {
    const Matrix a = rnd(3, 4, 1), b = rnd(4, 2, 2);
    Matrix ref(3, 2);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t k = 0; k < 4; ++k) ref(i, j) += a(i, k) * b(k, j);
    CHECK(max_abs_diff(matmul(a, b), ref) < 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, transpose(b)), ref) < 1e-12);
    CHECK(max_abs_diff(matmul_tn(transpose(a), b), ref) < 1e-12);
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("gradients of every primitive op match central differences") {
    SUBCASE("matmul") {
        expect_grads([](Tape&, std::vector<Var>& v) { return matmul(v[0], v[1]); },
                     {Parameter("a", rnd(3, 4, 1)), Parameter("b", rnd(4, 2, 2))});
    }
    SUBCASE("transpose") {
        expect_grads([](Tape&, std::vector<Var>& v) { return transpose(v[0]); }, {Parameter("a", rnd(3, 2, 3))});
    }
    SUBCASE("add and add_row") {
        expect_grads([](Tape&, std::vector<Var>& v) { return add_row(add(v[0], v[1]), v[2]); },
                     {Parameter("a", rnd(3, 2, 4)), Parameter("b", rnd(3, 2, 5)), Parameter("bias", rnd(1, 2, 6))});
    }
    SUBCASE("mul, scale, tanh") {
        expect_grads([](Tape&, std::vector<Var>& v) { return tanh(scale(mul(v[0], v[1]), 0.7)); },
                     {Parameter("a", rnd(2, 3, 7)), Parameter("b", rnd(2, 3, 8))});
    }
    SUBCASE("concat, select, slice") {
        expect_grads(
            [](Tape&, std::vector<Var>& v) {
                Var parts[] = {v[0], v[1]};
                Var c = concat_rows(parts);
                const std::size_t idx[] = {0, 3, 3, 1};
                return add(select_rows(c, idx), slice_rows(c, 1, 4));
            },
            {Parameter("a", rnd(2, 3, 9)), Parameter("b", rnd(3, 3, 10))});
    }
    SUBCASE("group means and row mean") {
        expect_grads(
            [](Tape&, std::vector<Var>& v) {
                const std::size_t g[] = {1, 0, 1, 2, 2};
                return add_row(mean_rows_by_group(v[0], g, 3), mean_rows(v[0]));
            },
            {Parameter("a", rnd(5, 4, 11))});
    }
    SUBCASE("softmax") {
        expect_grads([](Tape&, std::vector<Var>& v) { return softmax_rows(v[0]); }, {Parameter("a", rnd(3, 5, 12))});
    }
    SUBCASE("l2 normalize") {
        expect_grads([](Tape&, std::vector<Var>& v) { return l2_normalize_rows(v[0]); }, {Parameter("a", rnd(3, 4, 13))});
    }
    SUBCASE("cross entropy") {
        expect_grads(
            [](Tape&, std::vector<Var>& v) {
                const std::size_t labels[] = {2, 0, 4};
                return cross_entropy(v[0], labels);
            },
            {Parameter("logits", rnd(3, 5, 14))});
    }
    SUBCASE("residual mlp") {
        expect_grads(
            [](Tape&, std::vector<Var>& v) { return mlp_apply(v[0], MlpVars{v[1], v[2], v[3], v[4]}); },
            {Parameter("x", rnd(3, 4, 15)), Parameter("w1", rnd(4, 4, 16)), Parameter("b1", rnd(1, 4, 17)),
             Parameter("w2", rnd(4, 4, 18)), Parameter("b2", rnd(1, 4, 19))});
    }
}

TEST_CASE("reused nodes accumulate gradient from every consumer") {
    Parameter x("x", Matrix{{1.5, -2.0}});
    Tape t;
    Var v = t.leaf(x);
    t.backward(sum(add(mul(v, v), scale(v, 3.0))));  // d/dx (x^2 + 3x) = 2x + 3
    CHECK(x.grad(0, 0) == doctest::Approx(6.0));
    CHECK(x.grad(0, 1) == doctest::Approx(-1.0));
}

TEST_CASE("backward accumulates into existing parameter gradients") {
    Parameter x("x", Matrix{{2.0}});
    for (int i = 0; i < 2; ++i) {
        Tape t;
        t.backward(sum(scale(t.leaf(x), 5.0)));
    }
    CHECK(x.grad(0, 0) == doctest::Approx(10.0));
}

TEST_CASE("frozen leaves receive no gradient but pass it through") {
    Parameter w("w", Matrix{{2.0}}, false);
    Parameter x("x", Matrix{{3.0}});
    Tape t;
    t.backward(sum(matmul(t.leaf(x), t.leaf(w))));
    CHECK(x.grad(0, 0) == doctest::Approx(2.0));
    CHECK(w.grad == Matrix(1, 1));
}

TEST_CASE("backward requires a scalar root and runs once") {
    Tape t;
    Var a = t.constant(Matrix(2, 2, 1.0));
    CHECK_THROWS_AS(t.backward(a), ShapeError);
    Var s = sum(a);
    t.backward(s);
    CHECK_THROWS(t.backward(s));
}

TEST_CASE("softmax rows sum to one and survive large logits") {
    Tape t;
    Var s = softmax_rows(t.constant(Matrix{{1000.0, 1001.0, 999.0}, {-5.0, 0.0, 5.0}}));
    for (std::size_t i = 0; i < 2; ++i) {
        double total = 0;
        for (double v : s.value().row(i)) total += v;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("uniform logits give cross entropy ln(classes)") {
    for (std::size_t c : {2u, 5u, 101u}) {
        Tape t;
        std::vector<std::size_t> labels = {0, c - 1};
        Var l = cross_entropy(t.constant(Matrix(2, c, 0.37)), labels);
        CHECK(std::abs(l.value()[0] - std::log(static_cast<double>(c))) < 1e-12);
    }
}

TEST_CASE("numeric failures are reported, not propagated") {
    Tape t;
    CHECK_THROWS_AS(l2_normalize_rows(t.constant(Matrix(1, 3, 0.0))), NumericError);
    const std::size_t groups[] = {0, 0};
    CHECK_THROWS_AS(mean_rows_by_group(t.constant(Matrix(2, 2, 1.0)), groups, 2), NumericError);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(scale(t.constant(Matrix{{1e308}}), 1e10), NumericError);
    CHECK_THROWS_AS(t.constant(Matrix{{inf}}), NumericError);
}

TEST_CASE("grad_check names a corrupted parameter group") {
    Parameter a("good", rnd(2, 2, 1)), b("bad", rnd(2, 2, 2));
    std::vector<Parameter*> ps = {&a, &b};
    auto loss = [&](Tape& t) { return sum(tanh(matmul(t.leaf(a), t.leaf(b)))); };
    CHECK(grad_check(loss, ps).passed);
    const GradCheckReport r = grad_check(loss, ps, {}, [](std::span<Parameter* const> p) { p[1]->grad[3] += 0.5; });
    CHECK_FALSE(r.passed);
    CHECK(r.worst_group == "bad");
    CHECK(r.groups[0].max_rel_error < 1e-4);
}
