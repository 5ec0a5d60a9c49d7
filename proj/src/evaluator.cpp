#include "dfsp/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "dfsp/errors.hpp"
#include "dfsp/format.hpp"

namespace dfsp {

double harmonic_mean(double a, double b) {
    return (a + b) > 0.0 ? 2.0 * a * b / (a + b) : 0.0;
}

std::size_t argmax_row(const Matrix& scores, std::size_t row) {
    auto r = scores.row(row);
    return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
}

std::vector<std::size_t> argmax_rows(const Matrix& scores) {
    std::vector<std::size_t> out(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) out[i] = argmax_row(scores, i);
    return out;
}

namespace {

void check_set(const ScoredSet& set) {
    const Matrix& s = set.scores;
    if (set.true_column.size() != s.rows() || set.seen_sample.size() != s.rows() ||
        set.unseen_column.size() != s.cols()) {
        throw ShapeError("scored set bookkeeping does not match a " + s.shape_str() + " score matrix");
    }
    if (s.cols() == 0) throw ShapeError("score matrix has no columns");
    if (!s.all_finite()) throw NumericError("score matrix contains non-finite values");
    const auto seen = std::count(set.seen_sample.begin(), set.seen_sample.end(), true);
    if (seen == 0) throw DataError("evaluation set has no seen-pair samples");
    if (static_cast<std::size_t>(seen) == s.rows()) {
        throw DataError("evaluation set has no unseen-pair samples");
    }
}

std::size_t biased_argmax(const ScoredSet& set, std::size_t row, double bias) {
    auto r = set.scores.row(row);
    std::size_t best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < r.size(); ++c) {
        const double v = r[c] + (set.unseen_column[c] ? bias : 0.0);
        if (v > best_v) {
            best_v = v;
            best = c;
        }
    }
    return best;
}

CurvePoint point_at(const ScoredSet& set, double bias) {
    std::size_t seen_total = 0, seen_ok = 0, unseen_total = 0, unseen_ok = 0;
    for (std::size_t i = 0; i < set.scores.rows(); ++i) {
        const bool ok = set.true_column[i] >= 0 &&
                        biased_argmax(set, i, bias) == static_cast<std::size_t>(set.true_column[i]);
        if (set.seen_sample[i]) {
            ++seen_total;
            seen_ok += ok;
        } else {
            ++unseen_total;
            unseen_ok += ok;
        }
    }
    return {bias, static_cast<double>(seen_ok) / static_cast<double>(seen_total),
            static_cast<double>(unseen_ok) / static_cast<double>(unseen_total)};
}

MetricsReport summarize(const ScoredSet& set, std::vector<CurvePoint> curve) {
    MetricsReport r;
    r.curve = std::move(curve);
    r.num_columns = set.scores.cols();
    for (bool s : set.seen_sample) (s ? r.num_seen_samples : r.num_unseen_samples)++;
    bool first = true;
    for (const CurvePoint& p : r.curve) {
        r.best_seen = std::max(r.best_seen, p.seen_acc);
        r.best_unseen = std::max(r.best_unseen, p.unseen_acc);
        const double h = harmonic_mean(p.seen_acc, p.unseen_acc);
        if (first || h > r.best_harmonic) {
            r.best_harmonic = h;
            r.best_harmonic_bias = p.bias;
            first = false;
        }
    }
    r.auc = curve_auc(r.curve);
    return r;
}

}  // namespace

CurvePoint accuracy_at_bias(const ScoredSet& set, double bias) {
    check_set(set);
    return point_at(set, bias);
}

double curve_auc(std::span<const CurvePoint> curve) {
    double area = 0.0;
    for (std::size_t k = 1; k < curve.size(); ++k) {
        area += (curve[k].unseen_acc - curve[k - 1].unseen_acc) *
                (curve[k].seen_acc + curve[k - 1].seen_acc) / 2.0;
    }
    return area;
}

MetricsReport bias_sweep(const ScoredSet& set) {
    check_set(set);
    const Matrix& s = set.scores;
    const auto [lo, hi] = std::minmax_element(s.data().begin(), s.data().end());
    const double reach = (*hi - *lo) + 1.0;

    std::vector<double> breaks;
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double best_seen = -std::numeric_limits<double>::infinity();
        double best_unseen = best_seen;
        for (std::size_t c = 0; c < s.cols(); ++c) {
            double& slot = set.unseen_column[c] ? best_unseen : best_seen;
            slot = std::max(slot, s(i, c));
        }
        if (std::isfinite(best_seen) && std::isfinite(best_unseen)) {
            breaks.push_back(best_seen - best_unseen);
        }
    }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    std::vector<double> biases{-reach};
    for (std::size_t k = 1; k < breaks.size(); ++k) biases.push_back(0.5 * (breaks[k - 1] + breaks[k]));
    biases.push_back(reach);

    std::vector<CurvePoint> curve;
    curve.reserve(biases.size());
    for (double b : biases) curve.push_back(point_at(set, b));
    return summarize(set, std::move(curve));
}

MetricsReport metrics_from_biases(const ScoredSet& set, std::span<const double> biases) {
    check_set(set);
    std::vector<double> sorted(biases.begin(), biases.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<CurvePoint> curve;
    curve.reserve(sorted.size());
    for (double b : sorted) curve.push_back(point_at(set, b));
    return summarize(set, std::move(curve));
}

ScoredSet make_scored_set(Matrix scores, const CompositionSpace& space,
                          std::span<const Pair> columns, std::span<const Pair> truth) {
    if (scores.cols() != columns.size() || scores.rows() != truth.size()) {
        throw ShapeError("score matrix " + scores.shape_str() + " vs " +
                         std::to_string(truth.size()) + " samples x " +
                         std::to_string(columns.size()) + " pairs");
    }
    ScoredSet set;
    set.scores = std::move(scores);
    for (Pair c : columns) set.unseen_column.push_back(!space.is_seen(c));
    for (Pair t : truth) {
        auto it = std::find(columns.begin(), columns.end(), t);
        set.true_column.push_back(it == columns.end() ? -1L : static_cast<long>(it - columns.begin()));
        set.seen_sample.push_back(space.is_seen(t));
    }
    return set;
}

// ---- feasibility -----------------------------------------------------------------

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a), nb = norm(b);
    if (!(na > 0.0 && nb > 0.0)) throw NumericError("feasibility: zero-norm primitive embedding");
    return dot(a, b) / (na * nb);
}

}  // namespace

FeasibilityResult feasibility_filter(const CompositionSpace& space, const Matrix& state_embeddings,
                                     const Matrix& object_embeddings, double threshold) {
    const std::size_t n = space.num_states(), m = space.num_objects();
    if (state_embeddings.rows() != n || object_embeddings.rows() != m) {
        throw ShapeError("feasibility: need one embedding per state and per object");
    }
    if (!std::isfinite(threshold)) throw std::invalid_argument("feasibility threshold must be finite");

    // Cosine similarity tables between primitives of the same kind.
    Matrix state_sim(n, n), object_sim(m, m);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
            state_sim(a, b) = cosine(state_embeddings.row(a), state_embeddings.row(b));
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
            object_sim(a, b) = cosine(object_embeddings.row(a), object_embeddings.row(b));

    FeasibilityResult out;
    out.scores.threshold = threshold;
    out.scores.q.resize(n * m);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t o = 0; o < m; ++o) {
            double q_o = -1.0, q_s = -1.0;
            bool has_o = false, has_s = false;
            for (std::size_t o2 = 0; o2 < m; ++o2) {
                if (o2 == o || !space.is_seen({s, o2})) continue;
                q_o = has_o ? std::max(q_o, object_sim(o, o2)) : object_sim(o, o2);
                has_o = true;
            }
            for (std::size_t s2 = 0; s2 < n; ++s2) {
                if (s2 == s || !space.is_seen({s2, o})) continue;
                q_s = has_s ? std::max(q_s, state_sim(s, s2)) : state_sim(s, s2);
                has_s = true;
            }
            const double q = 0.5 * (q_s + q_o);
            out.scores.q[s * m + o] = q;
            if (space.is_seen({s, o}) || q > threshold) out.retained.push_back({s, o});
        }
    }
    return out;
}

// ---- report output -----------------------------------------------------------------

void write_report_json(std::ostream& out, const MetricsReport& r, double threshold) {
    nlohmann::ordered_json j;
    j["world"] = to_string(r.world);
    j["S"] = r.best_seen;
    j["U"] = r.best_unseen;
    j["H"] = r.best_harmonic;
    j["AUC"] = r.auc;
    j["best_harmonic_bias"] = r.best_harmonic_bias;
    j["num_columns"] = r.num_columns;
    j["num_seen_samples"] = r.num_seen_samples;
    j["num_unseen_samples"] = r.num_unseen_samples;
    j["curve_points"] = r.curve.size();
    if (r.world == WorldMode::open) j["threshold"] = threshold;
    out << j.dump(2) << '\n';
}

void write_curve_csv(std::ostream& out, const MetricsReport& r) {
    out << "bias,seen_acc,unseen_acc\n";
    for (const CurvePoint& p : r.curve) {
        out << format_double(p.bias) << ',' << format_double(p.seen_acc) << ','
            << format_double(p.unseen_acc) << '\n';
    }
}

}  // namespace dfsp
