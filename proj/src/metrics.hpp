#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "data.hpp"
#include "matrix.hpp"

namespace pmad {

// Thrown when a ranking metric has no positive or no negative mass.
struct MetricUndefined : std::runtime_error {
    explicit MetricUndefined(const std::string& what) : std::runtime_error(what) {}
};

struct ScoredSeries {
    std::vector<double> scores;
    std::vector<int> labels;    // binary ground truth
    std::vector<int> excluded;  // 1 = outside reconstructed coverage
};

// Per-timestep squared error of one window in standardized space; covers
// the first observed * patch_len points from pw.start.
struct WindowScores {
    int start = 0;
    std::vector<double> scores;
};
WindowScores anomaly_score(const PatchedWindow& pw, const Matrix& x_hat);

// Fractional-label ranking metrics. Weights in [0,1] are the positive mass
// per point; binary metrics are the {0,1} special case. Ties share credit
// (trapezoid over tied blocks == Mann-Whitney with ties at 1/2).
double weighted_auc_roc(const std::vector<double>& scores, const std::vector<double>& weights);
double weighted_auc_pr(const std::vector<double>& scores, const std::vector<double>& weights);

double auc_roc(const ScoredSeries& s);
double auc_pr(const ScoredSeries& s);

enum class BufferShape { linear, sqrt_shape };
BufferShape buffer_shape_from_string(const std::string& s);

// Positions inside an anomaly stay 1; distance delta in [1, ell] from a
// range border decays per the shape; overlaps take the max; ell=0 identity.
std::vector<double> label_buffer_transform(const std::vector<int>& labels, int ell,
                                           BufferShape shape = BufferShape::linear);

// Lower median of anomaly run lengths, floored at 4.
int default_ell_max(const std::vector<int>& labels);

enum class VusKind { roc, pr };

// Mean of the weighted metric over ell in {0..ell_max}; the transform is
// applied to the full label timeline before excluded positions are dropped.
double vus(const ScoredSeries& s, int ell_max, VusKind kind,
           BufferShape shape = BufferShape::linear);

// --- aggregation -----------------------------------------------------------

// Fractions in [0,1]; NaN marks a metric that was undefined for the series.
struct SeriesMetrics {
    int series_id = -1;
    std::string dataset;
    std::string subdomain;
    double auc_pr = 0.0;
    double auc_roc = 0.0;
    double vus_pr = 0.0;
    double vus_roc = 0.0;
};

struct MetricMeans {
    std::string dataset;  // empty for the corpus row
    std::string subdomain;
    double auc_pr = 0.0;
    double auc_roc = 0.0;
    double vus_pr = 0.0;
    double vus_roc = 0.0;
    int count = 0;  // series contributing (NaN entries are skipped per metric)
};

struct EvalReport {
    std::vector<SeriesMetrics> series;
    std::vector<MetricMeans> domain_means;  // one per domain, index order
    MetricMeans corpus_mean;
};

EvalReport aggregate(const std::vector<SeriesMetrics>& rows, const DomainIndex& domains);

// "36.35"-style rendering: percentage, two decimals; NaN -> "nan".
std::string format_percent(double fraction);

}  // namespace pmad
