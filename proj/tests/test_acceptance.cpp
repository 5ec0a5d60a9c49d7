// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dfsp/cli.hpp"
#include "dfsp/dfm.hpp"
#include "dfsp/errors.hpp"
#include "dfsp/evaluator.hpp"
#include "dfsp/format.hpp"
#include "dfsp/model.hpp"
#include "dfsp/objective.hpp"
#include "dfsp/pipeline.hpp"
#include "dfsp/trainer.hpp"
#include "support.hpp"

using namespace dfsp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// ---- 1. decomposition ---------------------------------------------------------

Matrix brute_decompose(const Matrix& f, const std::vector<Pair>& pairs, std::size_t n, std::size_t m) {
    Matrix out(n + m, f.cols());
    std::vector<double> cs(n, 0), co(m, 0);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        cs[pairs[k].state] += 1;
        co[pairs[k].object] += 1;
        for (std::size_t c = 0; c < f.cols(); ++c) {
            out(pairs[k].state, c) += f(k, c);
            out(n + pairs[k].object, c) += f(k, c);
        }
    }
    for (std::size_t s = 0; s < n; ++s)
        for (double& v : out.row(s)) v /= cs[s];
    for (std::size_t o = 0; o < m; ++o)
        for (double& v : out.row(n + o)) v /= co[o];
    return out;
}

Outcome decomposition_oracle() {
    Rng rng = make_rng(101, 0);
    double worst = 0;
    bool rows_ok = true;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng() % 8, m = 1 + rng() % 8;
        const std::size_t lo = std::max(n, m);
        const std::size_t seen = lo + rng() % (n * m - lo + 1);
        const CompositionSpace sp = testing::sized_space(n, m, seen, 0);
        const Matrix f = gaussian_matrix(seen, 1 + rng() % 8, 1.0, rng);
        Tape t;
        Var out = decompose(t.constant(f), pair_index(sp), n, m);
        rows_ok = rows_ok && out.rows() == n + m;
        worst = std::max(worst, max_abs_diff(out.value(), brute_decompose(f, sp.seen_pairs(), n, m)));
    }
    return {rows_ok && worst <= 1e-9, "100 instances, max |diff| " + num(worst) + ", rows n+m " + (rows_ok ? "yes" : "no")};
}

// ---- 2. attention -------------------------------------------------------------

Matrix attention_oracle(const Matrix& s1, const Matrix& s2, const Matrix& wq, const Matrix& wk, const Matrix& wv,
                        double scale) {
    const Matrix q = matmul(s2, wq), k = matmul(s1, wk), v = matmul(s1, wv);
    Matrix out(s2.rows(), wv.cols());
    for (std::size_t i = 0; i < s2.rows(); ++i) {
        std::vector<double> e(s1.rows());
        for (std::size_t j = 0; j < s1.rows(); ++j) e[j] = std::exp(scale * dot(q.row(i), k.row(j)));
        const double z = std::accumulate(e.begin(), e.end(), 0.0);
        for (std::size_t j = 0; j < s1.rows(); ++j)
            for (std::size_t c = 0; c < out.cols(); ++c) out(i, c) += e[j] / z * v(j, c);
    }
    return out;
}

Outcome attention_oracle_check() {
    Rng rng = make_rng(102, 0);
    double formula = 0, rowsum = 0, perm = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix s1 = gaussian_matrix(3, 4, 1.0, rng), s2 = gaussian_matrix(3, 4, 1.0, rng);
        const Matrix wq = gaussian_matrix(4, 4, 1.0, rng), wk = gaussian_matrix(4, 4, 1.0, rng),
                     wv = gaussian_matrix(4, 4, 1.0, rng);
        const double scale = default_attention_scale(4);
        Tape t;
        AttentionVars w{t.constant(wq), t.constant(wk), t.constant(wv)};
        const Matrix out = cross_attend(t.constant(s1), t.constant(s2), w, scale).value();
        formula = std::max(formula, max_abs_diff(out, attention_oracle(s1, s2, wq, wk, wv, scale)));
        const Matrix a = attention_weights(t.constant(s1), t.constant(s2), w, scale).value();
        for (std::size_t i = 0; i < a.rows(); ++i) {
            double s = 0;
            for (double v : a.row(i)) s += v;
            rowsum = std::max(rowsum, std::abs(s - 1.0));
        }
        std::vector<std::size_t> order = {0, 1, 2};
        std::shuffle(order.begin(), order.end(), rng);
        Matrix s1p(3, 4);
        for (std::size_t i = 0; i < 3; ++i)
            std::copy(s1.row(order[i]).begin(), s1.row(order[i]).end(), s1p.row(i).begin());
        perm = std::max(perm, max_abs_diff(cross_attend(t.constant(s1p), t.constant(s2), w, scale).value(), out));
    }
    return {formula <= 1e-9 && rowsum <= 1e-6 && perm <= 1e-9,
            "formula " + num(formula) + ", row sums " + num(rowsum) + ", key permutation " + num(perm)};
}

// ---- 3. gradients -------------------------------------------------------------

Outcome gradient_suite() {
    GradCheckOptions opts;  // step 1e-5, tolerance 1e-4
    Rng rng = make_rng(103, 0);
    auto P = [&rng](const char* name, std::size_t r, std::size_t c) {
        return Parameter(name, gaussian_matrix(r, c, 1.0, rng));
    };
    using Op = std::function<Var(Tape&, std::vector<Var>&)>;
    struct Case {
        const char* name;
        Op op;
        std::vector<Parameter> params;
    };
    std::vector<Case> cases;
    cases.push_back({"matmul", [](Tape&, std::vector<Var>& v) { return matmul(v[0], v[1]); }, {P("a", 3, 4), P("b", 4, 2)}});
    cases.push_back({"transpose", [](Tape&, std::vector<Var>& v) { return transpose(v[0]); }, {P("a", 3, 2)}});
    cases.push_back({"add/add_row", [](Tape&, std::vector<Var>& v) { return add_row(add(v[0], v[1]), v[2]); },
                     {P("a", 3, 2), P("b", 3, 2), P("bias", 1, 2)}});
    cases.push_back({"mul/scale/tanh", [](Tape&, std::vector<Var>& v) { return tanh(scale(mul(v[0], v[1]), 0.7)); },
                     {P("a", 2, 3), P("b", 2, 3)}});
    cases.push_back({"concat/select/slice",
                     [](Tape&, std::vector<Var>& v) {
                         Var parts[] = {v[0], v[1]};
                         Var c = concat_rows(parts);
                         const std::size_t idx[] = {0, 3, 3, 1};
                         return add(select_rows(c, idx), slice_rows(c, 1, 4));
                     },
                     {P("a", 2, 3), P("b", 3, 3)}});
    cases.push_back({"group means",
                     [](Tape&, std::vector<Var>& v) {
                         const std::size_t g[] = {1, 0, 1, 2, 2};
                         return add_row(mean_rows_by_group(v[0], g, 3), mean_rows(v[0]));
                     },
                     {P("a", 5, 4)}});
    cases.push_back({"softmax", [](Tape&, std::vector<Var>& v) { return softmax_rows(v[0]); }, {P("a", 3, 5)}});
    cases.push_back({"l2 normalize", [](Tape&, std::vector<Var>& v) { return l2_normalize_rows(v[0]); }, {P("a", 3, 4)}});
    cases.push_back({"cross entropy",
                     [](Tape&, std::vector<Var>& v) {
                         const std::size_t labels[] = {2, 0, 4};
                         return cross_entropy(v[0], labels);
                     },
                     {P("logits", 3, 5)}});
    cases.push_back({"mlp", [](Tape&, std::vector<Var>& v) { return mlp_apply(v[0], MlpVars{v[1], v[2], v[3], v[4]}); },
                     {P("x", 3, 4), P("w1", 4, 4), P("b1", 1, 4), P("w2", 4, 4), P("b2", 1, 4)}});
    cases.push_back({"cross attention",
                     [](Tape&, std::vector<Var>& v) {
                         return cross_attend(v[0], v[1], AttentionVars{v[2], v[3], v[4]}, default_attention_scale(4));
                     },
                     {P("s1", 3, 4), P("s2", 2, 4), P("wq", 4, 4), P("wk", 4, 4), P("wv", 4, 4)}});

    double worst = 0;
    std::string worst_name;
    bool ok = true;
    for (Case& c : cases) {
        std::vector<Parameter*> ptrs;
        for (Parameter& p : c.params) ptrs.push_back(&p);
        const Matrix proj = gaussian_matrix(8, 8, 1.0, rng);
        auto loss = [&](Tape& t) {
            std::vector<Var> leaves;
            for (Parameter& p : c.params) leaves.push_back(t.leaf(p));
            Var y = c.op(t, leaves);
            Matrix w(y.rows(), y.cols());
            for (std::size_t i = 0; i < w.rows(); ++i)
                for (std::size_t j = 0; j < w.cols(); ++j) w(i, j) = proj(i % 8, j % 8);
            return sum(mul(y, t.constant(w)));
        };
        const GradCheckReport r = grad_check(loss, ptrs, opts);
        ok = ok && r.passed;
        if (r.max_rel_error >= worst) {
            worst = r.max_rel_error;
            worst_name = c.name;
        }
    }
    for (FusionVariant v : {FusionVariant::t2i, FusionVariant::i2t, FusionVariant::bif}) {
        GradCheckSetup s;  // n = m = 3, d_f = 8, K = 1
        s.model.variant = v;
        const GradCheckReport r = model_grad_check(s, opts);
        ok = ok && r.passed;
        if (r.max_rel_error >= worst) {
            worst = r.max_rel_error;
            worst_name = std::string("full loss ") + to_string(v) + " " + r.worst_group;
        }
    }
    return {ok && worst < 1e-4,
            std::to_string(cases.size()) + " op groups + full loss x3 variants, max rel " + num(worst) + " (" + worst_name + ")"};
}

// ---- 4. parameter count -------------------------------------------------------

Outcome parameter_count() {
    ModelConfig cfg;
    cfg.feature_dim = 16;
    const DfspModel a = DfspModel::create(testing::sized_space(4, 6, 10, 3), cfg, 0);
    const DfspModel b = DfspModel::create(testing::sized_space(5, 5, 12, 4), cfg, 0);
    return {a.dfm_parameter_count() == b.dfm_parameter_count() && a.dfm_parameter_count() > 0,
            "(4,6): " + std::to_string(a.dfm_parameter_count()) + ", (5,5): " + std::to_string(b.dfm_parameter_count())};
}

// ---- 5/6. learning ------------------------------------------------------------

Dataset benchmark(std::uint64_t seed) {
    SyntheticSpec s;  // n = m = 5, sigma = 0.05, 20 samples per pair, 20% unseen
    s.seed = seed;
    return generate_synthetic(s).data;
}

MetricsReport train_and_report(const Dataset& d, bool use_dfm, std::uint64_t seed) {
    TrainConfig c;  // alpha 0.01, beta 0.1, K 1, 20 epochs, t2i
    c.seed = seed;
    c.model.input_dim = d.samples.dim();
    c.model.use_dfm = use_dfm;
    TrainResult r = train(d, c);
    return evaluate(r.best.model, d, {}).report;
}

Outcome end_to_end() {
    const auto t0 = std::chrono::steady_clock::now();
    const MetricsReport r = train_and_report(benchmark(0), true, 0);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {r.best_unseen >= 0.5 && r.auc >= 0.3 && secs < 120.0,
            "U " + num(r.best_unseen) + " (>= 0.5), AUC " + num(r.auc) + " (>= 0.3), S " + num(r.best_seen) + ", H " +
                num(r.best_harmonic)};
}

Outcome ablation() {
    double full = 0, spm = 0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Dataset d = benchmark(seed);
        const double a = train_and_report(d, true, seed).auc, b = train_and_report(d, false, seed).auc;
        full += a / 5.0;
        spm += b / 5.0;
    }
    return {full >= spm, "mean AUC +DFM " + num(full) + " vs SPM only " + num(spm)};
}

// ---- 7. sweep -----------------------------------------------------------------

Outcome sweep_oracle() {
    Rng rng = make_rng(107, 0);
    double worst = 0;
    bool monotone = true;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng() % 4, m = 2 + rng() % 4;
        const std::size_t lo = std::max(n, m);
        const std::size_t seen = lo + rng() % (n * m - lo);
        const std::size_t unseen = 1 + rng() % (n * m - seen);
        const CompositionSpace sp = testing::sized_space(n, m, seen, unseen);
        const auto& cols = sp.test_pairs();
        std::vector<Pair> truth;
        for (std::size_t i = 0; i < 20; ++i)
            truth.push_back(i < 10 ? cols[rng() % seen] : cols[seen + rng() % unseen]);
        Matrix s = testing::lattice_scores(20, cols.size(), rng);
        for (std::size_t i = 0; i < 20; ++i) s(i, sp.test_position(truth[i])) += 0.75;
        const ScoredSet set = make_scored_set(s, sp, cols, truth);
        const MetricsReport exact = bias_sweep(set);
        const auto [mn, mx] = std::minmax_element(s.data().begin(), s.data().end());
        const double r = *mx - *mn;
        std::vector<double> grid(10001);
        for (std::size_t k = 0; k < grid.size(); ++k) grid[k] = -r + 2.0 * r * static_cast<double>(k) / 10000.0;
        worst = std::max(worst, std::abs(exact.auc - metrics_from_biases(set, grid).auc));
        for (std::size_t k = 1; k < exact.curve.size(); ++k) {
            monotone = monotone && exact.curve[k].seen_acc <= exact.curve[k - 1].seen_acc &&
                       exact.curve[k].unseen_acc >= exact.curve[k - 1].unseen_acc;
        }
    }
    return {worst <= 1e-3 && monotone,
            "50 instances, max |AUC - grid| " + num(worst) + ", monotone " + (monotone ? "yes" : "no")};
}

// ---- 8. feasibility -----------------------------------------------------------

Outcome open_world_filter() {
    const CompositionSpace sp = testing::sized_space(5, 6, 12, 0, WorldMode::open);
    std::vector<Pair> seen = sp.seen_pairs();
    std::sort(seen.begin(), seen.end());
    const bool ortho = feasibility_filter(sp, Matrix::identity(5), Matrix::identity(6), 0.4).retained == seen;
    const bool same = feasibility_filter(sp, Matrix(5, 3, 1.0), Matrix(6, 3, 1.0), 0.4).retained.size() == 30;
    Rng rng = make_rng(108, 0);
    bool monotone = true;
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix s = gaussian_matrix(5, 4, 1.0, rng), o = gaussian_matrix(6, 4, 1.0, rng);
        std::size_t prev = 31;
        for (int k = 0; k <= 40; ++k) {
            const std::size_t size = feasibility_filter(sp, s, o, -1.0 + 0.05 * k).retained.size();
            monotone = monotone && size <= prev;
            prev = size;
        }
    }
    return {ortho && same && monotone, std::string("orthogonal keeps seen only ") + (ortho ? "yes" : "no") +
                                           ", identical keeps all " + (same ? "yes" : "no") + ", monotone in T " +
                                           (monotone ? "yes" : "no")};
}

// ---- 9. determinism -----------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
    const fs::path a = testing::scratch_dir("accept_det_a"), b = testing::scratch_dir("accept_det_b");
    for (const fs::path& d : {a, b}) {
        std::ostringstream out, err;
        const int code = run_cli({"train", "--synthetic", "n=5,m=5,sigma=0.05,samples=20,unseen=0.2,seed=0", "--seed",
                                  "0", "--out", d.string()},
                                 out, err);
        if (code != 0) return {false, "train exited " + std::to_string(code) + ": " + err.str()};
    }
    bool same = true;
    std::string diff;
    for (const char* f : {"checkpoint.json", "metrics.json", "curve.csv", "train_log.jsonl"}) {
        if (slurp(a / f) != slurp(b / f) || slurp(a / f).empty()) {
            same = false;
            diff += std::string(" ") + f;
        }
    }
    return {same, same ? "checkpoint, metrics, curve, log identical" : "differs:" + diff};
}

// ---- 10. loss identities ------------------------------------------------------

Outcome loss_identities() {
    Tape t;
    const std::vector<std::size_t> labels = {0, 3, 5};
    Var fv = t.constant(Matrix(3, 4, 0.5));
    const double spm = loss_spm(fv, t.constant(Matrix(7, 4, 0.5)), labels, 0.01).value()[0];
    const double dfm = loss_dfm(t.constant(Matrix(3, 12, -2.0)), labels).value()[0];
    const std::vector<std::size_t> s = {0, 1, 2}, o = {3, 0, 1};
    const double st = loss_st_obj(fv, t.constant(Matrix(3, 4, 0.5)), t.constant(Matrix(4, 4, 0.5)), s, o, 0.01).value()[0];
    const double e = std::max({std::abs(spm - std::log(7.0)), std::abs(dfm - std::log(12.0)),
                               std::abs(st - std::log(3.0) - std::log(4.0))});
    LossParts parts{t.constant(Matrix{{1.2345}}), t.constant(Matrix{{9.0}}), t.constant(Matrix{{4.0}})};
    const bool exact = total_loss(parts, {0.0, 0.0}).value()[0] == 1.2345 &&
                       total_loss(1.2345, 9.0, 4.0, {0.0, 0.0}).total == 1.2345;
    return {e <= 1e-9 && exact, "max |loss - ln C| " + num(e) + ", alpha=beta=0 total == l_dfm " + (exact ? "yes" : "no")};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
        double limit_seconds;  // 0: no runtime bound
    };
    const Criterion criteria[] = {
        {"decomposition oracle", decomposition_oracle, 5.0},
        {"attention oracle", attention_oracle_check, 0.0},
        {"gradient suite", gradient_suite, 60.0},
        {"parameter-count invariance", parameter_count, 0.0},
        {"end-to-end learning", end_to_end, 120.0},
        {"ablation direction", ablation, 0.0},
        {"AUC sweep oracle", sweep_oracle, 0.0},
        {"open-world filter", open_world_filter, 0.0},
        {"determinism", determinism, 0.0},
        {"loss identities", loss_identities, 0.0},
    };
    int failed = 0, index = 0;
    for (const Criterion& c : criteria) {
        ++index;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.limit_seconds > 0 && secs >= c.limit_seconds) {
            o.pass = false;
            o.detail += "; over the " + num(c.limit_seconds) + " s limit";
        }
        failed += !o.pass;
        std::printf("%s %2d %-28s %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", index, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d of %d criteria passed\n", index - failed, index);
    return failed == 0 ? 0 : 1;
}
