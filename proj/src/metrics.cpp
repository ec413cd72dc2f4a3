#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace pmad {

WindowScores anomaly_score(const PatchedWindow& pw, const Matrix& x_hat) {
    if (x_hat.rows != pw.observed || x_hat.cols != pw.patches.cols)
        throw std::invalid_argument("anomaly_score: reconstruction shape mismatch");
    WindowScores out;
    out.start = pw.start;
    out.scores.reserve(static_cast<size_t>(pw.observed) * pw.patches.cols);
    for (int p = 0; p < pw.observed; ++p)
        for (int j = 0; j < pw.patches.cols; ++j) {
            const double d = pw.patches.at(p, j) - x_hat.at(p, j);
            out.scores.push_back(d * d);
        }
    return out;
}

namespace {

struct RankedMass {
    std::vector<size_t> order;  // indices by descending score
    double pos_total = 0.0;
    double neg_total = 0.0;
};

RankedMass rank_by_score(const std::vector<double>& scores, const std::vector<double>& weights) {
    if (scores.size() != weights.size())
        throw std::invalid_argument("metrics: scores/weights length mismatch");
    if (scores.empty()) throw MetricUndefined("metrics: empty input");
    RankedMass r;
    r.order.resize(scores.size());
    std::iota(r.order.begin(), r.order.end(), 0);
    std::stable_sort(r.order.begin(), r.order.end(),
                     [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    for (size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] < 0.0 || weights[i] > 1.0 || !std::isfinite(scores[i]))
            throw std::invalid_argument("metrics: weights must be in [0,1], scores finite");
        r.pos_total += weights[i];
        r.neg_total += 1.0 - weights[i];
    }
    if (r.pos_total <= 0.0) throw MetricUndefined("metrics: no positive mass");
    if (r.neg_total <= 0.0) throw MetricUndefined("metrics: no negative mass");
    return r;
}

}  // namespace

double weighted_auc_roc(const std::vector<double>& scores, const std::vector<double>& weights) {
    RankedMass r = rank_by_score(scores, weights);
    double tp = 0.0, fp = 0.0, area = 0.0;
    size_t i = 0;
    while (i < r.order.size()) {
        // advance over one tied block
        double btp = 0.0, bfp = 0.0;
        const double s = scores[r.order[i]];
        while (i < r.order.size() && scores[r.order[i]] == s) {
            btp += weights[r.order[i]];
            bfp += 1.0 - weights[r.order[i]];
            ++i;
        }
        // trapezoid across the block: ties share credit
        area += bfp * (tp + btp / 2.0);
        tp += btp;
        fp += bfp;
    }
    return area / (r.pos_total * r.neg_total);
}

double weighted_auc_pr(const std::vector<double>& scores, const std::vector<double>& weights) {
    RankedMass r = rank_by_score(scores, weights);
    double tp = 0.0, fp = 0.0, ap = 0.0, prev_recall = 0.0;
    size_t i = 0;
    while (i < r.order.size()) {
        double btp = 0.0, bfp = 0.0;
        const double s = scores[r.order[i]];
        while (i < r.order.size() && scores[r.order[i]] == s) {
            btp += weights[r.order[i]];
            bfp += 1.0 - weights[r.order[i]];
            ++i;
        }
        tp += btp;
        fp += bfp;
        const double recall = tp / r.pos_total;
        const double precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

namespace {

std::pair<std::vector<double>, std::vector<double>> drop_excluded(
    const ScoredSeries& s, const std::vector<double>& weights) {
    if (s.scores.size() != s.labels.size() ||
        (!s.excluded.empty() && s.excluded.size() != s.scores.size()))
        throw std::invalid_argument("metrics: ScoredSeries length mismatch");
    std::vector<double> sc, w;
    for (size_t i = 0; i < s.scores.size(); ++i) {
        if (!s.excluded.empty() && s.excluded[i]) continue;
        sc.push_back(s.scores[i]);
        w.push_back(weights[i]);
    }
    return {std::move(sc), std::move(w)};
}

std::vector<double> binary_weights(const std::vector<int>& labels) {
    std::vector<double> w(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) w[i] = labels[i] ? 1.0 : 0.0;
    return w;
}

}  // namespace

double auc_roc(const ScoredSeries& s) {
    auto [sc, w] = drop_excluded(s, binary_weights(s.labels));
    return weighted_auc_roc(sc, w);
}

double auc_pr(const ScoredSeries& s) {
    auto [sc, w] = drop_excluded(s, binary_weights(s.labels));
    return weighted_auc_pr(sc, w);
}

BufferShape buffer_shape_from_string(const std::string& s) {
    if (s == "linear") return BufferShape::linear;
    if (s == "sqrt") return BufferShape::sqrt_shape;
    throw std::invalid_argument("unknown buffer shape: " + s);
}

std::vector<double> label_buffer_transform(const std::vector<int>& labels, int ell,
                                           BufferShape shape) {
    if (ell < 0) throw std::invalid_argument("label_buffer_transform: ell must be >= 0");
    const int n = static_cast<int>(labels.size());
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = labels[i] ? 1.0 : 0.0;
    if (ell == 0) return out;

    auto ramp = [&](int delta) {
        double w = 1.0 - static_cast<double>(delta) / (ell + 1);
        return shape == BufferShape::linear ? w : std::sqrt(w);
    };

    int i = 0;
    while (i < n) {
        if (!labels[i]) {
            ++i;
            continue;
        }
        int j = i;
        while (j + 1 < n && labels[j + 1]) ++j;  // run [i, j]
        for (int delta = 1; delta <= ell; ++delta) {
            const double w = ramp(delta);
            if (i - delta >= 0) out[i - delta] = std::max(out[i - delta], w);
            if (j + delta < n) out[j + delta] = std::max(out[j + delta], w);
        }
        i = j + 1;
    }
    return out;
}

int default_ell_max(const std::vector<int>& labels) {
    std::vector<int> runs;
    int i = 0;
    const int n = static_cast<int>(labels.size());
    while (i < n) {
        if (!labels[i]) {
            ++i;
            continue;
        }
        int j = i;
        while (j + 1 < n && labels[j + 1]) ++j;
        runs.push_back(j - i + 1);
        i = j + 1;
    }
    if (runs.empty()) return 4;
    std::sort(runs.begin(), runs.end());
    const int median = runs[(runs.size() - 1) / 2];
    return std::max(4, median);
}

double vus(const ScoredSeries& s, int ell_max, VusKind kind, BufferShape shape) {
    if (ell_max < 0) throw std::invalid_argument("vus: ell_max must be >= 0");
    double acc = 0.0;
    for (int ell = 0; ell <= ell_max; ++ell) {
        std::vector<double> weights = label_buffer_transform(s.labels, ell, shape);
        auto [sc, w] = drop_excluded(s, weights);
        acc += kind == VusKind::roc ? weighted_auc_roc(sc, w) : weighted_auc_pr(sc, w);
    }
    return acc / (ell_max + 1);
}

namespace {

struct MeanAccum {
    double sum[4] = {0, 0, 0, 0};
    int cnt[4] = {0, 0, 0, 0};
    int series = 0;

    void add(const SeriesMetrics& m) {
        const double v[4] = {m.auc_pr, m.auc_roc, m.vus_pr, m.vus_roc};
        for (int k = 0; k < 4; ++k) {
            if (std::isnan(v[k])) continue;
            sum[k] += v[k];
            ++cnt[k];
        }
        ++series;
    }

    void fill(MetricMeans& out) const {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        out.auc_pr = cnt[0] ? sum[0] / cnt[0] : nan;
        out.auc_roc = cnt[1] ? sum[1] / cnt[1] : nan;
        out.vus_pr = cnt[2] ? sum[2] / cnt[2] : nan;
        out.vus_roc = cnt[3] ? sum[3] / cnt[3] : nan;
        out.count = series;
    }
};

}  // namespace

EvalReport aggregate(const std::vector<SeriesMetrics>& rows, const DomainIndex& domains) {
    EvalReport report;
    report.series = rows;

    std::vector<MeanAccum> per_domain(domains.size());
    MeanAccum corpus;
    for (const SeriesMetrics& m : rows) {
        const int d = domains.id_of(m.dataset, m.subdomain);
        if (d < 0)
            throw std::invalid_argument("aggregate: series domain not in index: " + m.dataset +
                                        "/" + m.subdomain);
        per_domain[d].add(m);
        corpus.add(m);
    }
    for (int d = 0; d < domains.size(); ++d) {
        MetricMeans mm;
        mm.dataset = domains.labels()[d].first;
        mm.subdomain = domains.labels()[d].second;
        per_domain[d].fill(mm);
        report.domain_means.push_back(mm);
    }
    corpus.fill(report.corpus_mean);
    return report;
}

std::string format_percent(double fraction) {
    if (std::isnan(fraction)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * fraction);
    return buf;
}

}  // namespace pmad
