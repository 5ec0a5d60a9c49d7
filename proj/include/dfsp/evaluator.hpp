#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dfsp/composition_space.hpp"
#include "dfsp/matrix.hpp"

namespace dfsp {

struct CurvePoint {
    double bias = 0.0;
    double seen_acc = 0.0;
    double unseen_acc = 0.0;
};

struct MetricsReport {
    double best_seen = 0.0;      // S
    double best_unseen = 0.0;    // U
    double best_harmonic = 0.0;  // H
    double auc = 0.0;
    double best_harmonic_bias = 0.0;
    std::vector<CurvePoint> curve;  // ordered by increasing bias
    WorldMode world = WorldMode::closed;
    std::size_t num_seen_samples = 0;
    std::size_t num_unseen_samples = 0;
    std::size_t num_columns = 0;
};

double harmonic_mean(double a, double b);

/// Score matrix with its column and sample bookkeeping.
struct ScoredSet {
    Matrix scores;                   // B x P
    std::vector<long> true_column;   // per sample; -1 when the true pair is not a column
    std::vector<bool> unseen_column; // per column
    std::vector<bool> seen_sample;   // per sample: true pair is a seen pair
};

/// Argmax with ties broken by the lowest column index.
std::size_t argmax_row(const Matrix& scores, std::size_t row);
std::vector<std::size_t> argmax_rows(const Matrix& scores);

/// Accuracies with `bias` added to every unseen column.
CurvePoint accuracy_at_bias(const ScoredSet& set, double bias);

/// Exact generalized sweep. Per sample the prediction only flips where the
/// bias equals (best seen score - best unseen score); the curve is evaluated
/// at the midpoints between consecutive breakpoints plus two endpoints
/// beyond the score range. AUC integrates seen_acc over unseen_acc by
/// trapezoids in curve order.
MetricsReport bias_sweep(const ScoredSet& set);

/// Same metrics from an explicit list of biases (grid oracle).
MetricsReport metrics_from_biases(const ScoredSet& set, std::span<const double> biases);

/// Area under the (unseen_acc, seen_acc) curve, points in bias order.
double curve_auc(std::span<const CurvePoint> curve);

/// Builds the bookkeeping for scores over `columns`.
ScoredSet make_scored_set(Matrix scores, const CompositionSpace& space,
                          std::span<const Pair> columns, std::span<const Pair> truth);

struct FeasibilityScores {
    std::vector<double> q;  // n*m entries, state-major
    double threshold = 0.4;
};

struct FeasibilityResult {
    std::vector<Pair> retained;  // state-major order
    FeasibilityScores scores;
};

/// Open-world calibration. For a candidate (s, o):
///   q_o = max cos(phi(o), phi(o')) over o' != o with (s, o') seen
///   q_s = max cos(phi(s), phi(s')) over s' != s with (s', o) seen
///   q   = (q_s + q_o) / 2, a missing term counting as -1.
/// Keeps candidates with q > threshold; seen pairs are always kept.
FeasibilityResult feasibility_filter(const CompositionSpace& space, const Matrix& state_embeddings,
                                     const Matrix& object_embeddings, double threshold);

void write_report_json(std::ostream& out, const MetricsReport& report, double threshold);
void write_curve_csv(std::ostream& out, const MetricsReport& report);

}  // namespace dfsp
