#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "metrics.hpp"
#include "rng.hpp"

using namespace pmad;

namespace {

// Mann-Whitney form of the weighted ROC area: every ordered pair (i, j),
// including i == j, contributes positive-mass(i) * negative-mass(j) with
// credit 1 above, 1/2 on ties.
double oracle_weighted_roc(const std::vector<double>& scores, const std::vector<double>& weights) {
    double pos = 0.0, neg = 0.0, num = 0.0;
    for (double w : weights) {
        pos += w;
        neg += 1.0 - w;
    }
    for (size_t i = 0; i < scores.size(); ++i)
        for (size_t j = 0; j < scores.size(); ++j) {
            double credit = 0.0;
            if (scores[i] > scores[j])
                credit = 1.0;
            else if (scores[i] == scores[j])
                credit = 0.5;
            num += weights[i] * (1.0 - weights[j]) * credit;
        }
    return num / (pos * neg);
}

// Step-interpolated AP with a fresh full scan per distinct threshold.
double oracle_weighted_pr(const std::vector<double>& scores, const std::vector<double>& weights) {
    std::set<double, std::greater<double>> thresholds(scores.begin(), scores.end());
    double pos = 0.0;
    for (double w : weights) pos += w;
    double ap = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        double tp = 0.0, fp = 0.0;
        for (size_t i = 0; i < scores.size(); ++i)
            if (scores[i] >= t) {
                tp += weights[i];
                fp += 1.0 - weights[i];
            }
        const double recall = tp / pos;
        ap += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
    }
    return ap;
}

// Nearest-anomalous-point distances instead of run expansion.
std::vector<double> oracle_transform(const std::vector<int>& labels, int ell, BufferShape shape) {
    const int n = static_cast<int>(labels.size());
    std::vector<double> out(n, 0.0);
    for (int i = 0; i < n; ++i) {
        if (labels[i]) {
            out[i] = 1.0;
            continue;
        }
        int dmin = n + 1;
        for (int j = 0; j < n; ++j)
            if (labels[j]) dmin = std::min(dmin, std::abs(i - j));
        if (dmin <= ell) {
            const double w = 1.0 - static_cast<double>(dmin) / (ell + 1);
            out[i] = shape == BufferShape::linear ? w : std::sqrt(w);
        }
    }
    return out;
}

double oracle_vus(const ScoredSeries& s, int ell_max, VusKind kind, BufferShape shape) {
    double acc = 0.0;
    for (int ell = 0; ell <= ell_max; ++ell) {
        std::vector<double> w = oracle_transform(s.labels, ell, shape);
        std::vector<double> sc2, w2;
        for (size_t i = 0; i < s.scores.size(); ++i) {
            if (!s.excluded.empty() && s.excluded[i]) continue;
            sc2.push_back(s.scores[i]);
            w2.push_back(w[i]);
        }
        acc += kind == VusKind::roc ? oracle_weighted_roc(sc2, w2) : oracle_weighted_pr(sc2, w2);
    }
    return acc / (ell_max + 1);
}

std::vector<int> random_labels(Rng& rng, int n, double p1) {
    std::vector<int> labels(n, 0);
    for (int i = 0; i < n; ++i) labels[i] = rng.uniform() < p1 ? 1 : 0;
    return labels;
}

// Ensures both classes are present.
std::vector<int> random_labels_mixed(Rng& rng, int n, double p1) {
    std::vector<int> labels = random_labels(rng, n, p1);
    labels[0] = 1;
    labels[n - 1] = 0;
    return labels;
}

}  // namespace

TEST_CASE("anomaly_score is per-point squared error over observed patches") {
    PatchedWindow pw;
    pw.start = 40;
    pw.observed = 2;
    pw.patches = Matrix(3, 2);
    pw.patches.at(0, 0) = 1.0;
    pw.patches.at(0, 1) = -2.0;
    pw.patches.at(1, 0) = 0.5;
    pw.patches.at(1, 1) = 0.0;
    pw.mask = {1, 1, 0};

    Matrix x_hat(2, 2);
    x_hat.at(0, 0) = 0.0;
    x_hat.at(0, 1) = -1.0;
    x_hat.at(1, 0) = 0.5;
    x_hat.at(1, 1) = 2.0;

    WindowScores ws = anomaly_score(pw, x_hat);
    CHECK(ws.start == 40);
    REQUIRE(ws.scores.size() == 4);
    CHECK(ws.scores[0] == 1.0);
    CHECK(ws.scores[1] == 1.0);
    CHECK(ws.scores[2] == 0.0);
    CHECK(ws.scores[3] == 4.0);

    Matrix bad(3, 2);
    CHECK_THROWS_AS(anomaly_score(pw, bad), std::invalid_argument);
}

TEST_CASE("auc_roc on a hand-computed example") {
    // scores 4 > 3 > 2 > 1, labels 1,0,1,0: pairs (4,3)=1 (4,1)=1 (2,3)=0
    // (2,1)=1 -> 3/4.
    ScoredSeries s;
    s.scores = {4.0, 3.0, 2.0, 1.0};
    s.labels = {1, 0, 1, 0};
    CHECK(auc_roc(s) == doctest::Approx(0.75).epsilon(1e-12));
    // perfect and inverted rankings
    s.scores = {9.0, 8.0, 2.0, 1.0};
    s.labels = {1, 1, 0, 0};
    CHECK(auc_roc(s) == doctest::Approx(1.0).epsilon(1e-12));
    s.labels = {0, 0, 1, 1};
    CHECK(auc_roc(s) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("auc_pr on a hand-computed example") {
    // Descending: (1) tp=1 fp=0 -> R=.5 P=1; (0) R=.5; (1) tp=2 fp=1 ->
    // R=1 P=2/3. AP = .5*1 + .5*(2/3) = 5/6.
    ScoredSeries s;
    s.scores = {4.0, 3.0, 2.0, 1.0};
    s.labels = {1, 0, 1, 0};
    CHECK(auc_pr(s) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("all-equal scores give chance-level metrics") {
    ScoredSeries s;
    s.scores.assign(10, 7.5);
    s.labels = {1, 0, 0, 1, 0, 0, 0, 1, 0, 0};
    CHECK(auc_roc(s) == 0.5);
    CHECK(auc_pr(s) == doctest::Approx(0.3).epsilon(1e-12));  // positive rate
}

TEST_CASE("metrics are invariant under a strictly increasing transform") {
    Rng rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 30 + static_cast<int>(rng.below(50));
        ScoredSeries a;
        // integer grid forces ties; the affine map below is exact on it
        for (int i = 0; i < n; ++i) a.scores.push_back(static_cast<double>(rng.below(40)));
        a.labels = random_labels_mixed(rng, n, 0.3);
        ScoredSeries b = a;
        for (double& v : b.scores) v = v * 0.5 - 7.0;
        CHECK(auc_roc(a) == auc_roc(b));
        CHECK(auc_pr(a) == auc_pr(b));
    }
}

TEST_CASE("auc_roc(s) + auc_roc(-s) = 1") {
    Rng rng(202);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 20 + static_cast<int>(rng.below(60));
        ScoredSeries a;
        for (int i = 0; i < n; ++i) a.scores.push_back(static_cast<double>(rng.below(15)));
        a.labels = random_labels_mixed(rng, n, 0.4);
        ScoredSeries b = a;
        for (double& v : b.scores) v = -v;
        CHECK(auc_roc(a) + auc_roc(b) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("undefined metrics throw") {
    ScoredSeries s;
    s.scores = {1.0, 2.0};
    s.labels = {1, 1};
    CHECK_THROWS_AS(auc_roc(s), MetricUndefined);
    CHECK_THROWS_AS(auc_pr(s), MetricUndefined);
    s.labels = {0, 0};
    CHECK_THROWS_AS(auc_roc(s), MetricUndefined);
    s.scores.clear();
    s.labels.clear();
    CHECK_THROWS_AS(auc_roc(s), MetricUndefined);
    // exclusion can remove a whole class
    s.scores = {3.0, 1.0};
    s.labels = {1, 0};
    s.excluded = {1, 0};
    CHECK_THROWS_AS(auc_roc(s), MetricUndefined);
}

TEST_CASE("excluded positions are dropped before ranking") {
    Rng rng(303);
    ScoredSeries full;
    const int n = 120;
    for (int i = 0; i < n; ++i) full.scores.push_back(rng.uniform(-5.0, 5.0));
    full.labels = random_labels_mixed(rng, n, 0.25);
    full.excluded.assign(n, 0);
    for (int i = 0; i < n; ++i)
        if (rng.uniform() < 0.2) full.excluded[i] = 1;
    // keep both classes after exclusion
    full.excluded[0] = 0;
    full.excluded[n - 1] = 0;
    // poison the excluded entries: they must not matter
    ScoredSeries poisoned = full;
    for (int i = 0; i < n; ++i)
        if (poisoned.excluded[i]) poisoned.scores[i] = 1e18;

    ScoredSeries manual;
    for (int i = 0; i < n; ++i) {
        if (full.excluded[i]) continue;
        manual.scores.push_back(full.scores[i]);
        manual.labels.push_back(full.labels[i]);
    }
    CHECK(auc_roc(poisoned) == auc_roc(manual));
    CHECK(auc_pr(poisoned) == auc_pr(manual));
}

TEST_CASE("weighted AUC matches the pairwise oracle on random inputs") {
    Rng rng(404);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 5 + static_cast<int>(rng.below(196));
        std::vector<double> scores(n), weights(n);
        const bool tie_heavy = trial % 2 == 0;
        const bool binary = trial % 3 == 0;
        for (int i = 0; i < n; ++i) {
            scores[i] = tie_heavy ? static_cast<double>(rng.below(12)) : rng.uniform(-3.0, 3.0);
            weights[i] = binary ? static_cast<double>(rng.below(2)) : rng.uniform();
        }
        // both masses must be present
        weights[0] = binary ? 1.0 : 0.9;
        weights[n - 1] = binary ? 0.0 : 0.1;
        CHECK(weighted_auc_roc(scores, weights) ==
              doctest::Approx(oracle_weighted_roc(scores, weights)).epsilon(1e-9));
        CHECK(weighted_auc_pr(scores, weights) ==
              doctest::Approx(oracle_weighted_pr(scores, weights)).epsilon(1e-9));
    }
}

TEST_CASE("binary metrics are the weighted ones with 0/1 weights") {
    Rng rng(505);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 10 + static_cast<int>(rng.below(100));
        ScoredSeries s;
        for (int i = 0; i < n; ++i) s.scores.push_back(static_cast<double>(rng.below(9)));
        s.labels = random_labels_mixed(rng, n, 0.3);
        std::vector<double> w(s.labels.begin(), s.labels.end());
        CHECK(auc_roc(s) == weighted_auc_roc(s.scores, w));
        CHECK(auc_pr(s) == weighted_auc_pr(s.scores, w));
    }
}

TEST_CASE("label_buffer_transform ramp around a single range") {
    std::vector<int> labels = {0, 0, 1, 0, 0};
    std::vector<double> w = label_buffer_transform(labels, 2);
    REQUIRE(w.size() == 5);
    CHECK(w[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(w[2] == 1.0);
    CHECK(w[3] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(w[4] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("label_buffer_transform edge behaviour") {
    // ell = 0 is the identity embedding
    std::vector<int> labels = {0, 1, 1, 0};
    std::vector<double> w0 = label_buffer_transform(labels, 0);
    CHECK(w0 == std::vector<double>{0.0, 1.0, 1.0, 0.0});

    // buffers from two ranges overlap: max wins
    labels = {1, 0, 0, 1};
    std::vector<double> w = label_buffer_transform(labels, 2);
    CHECK(w[0] == 1.0);
    CHECK(w[3] == 1.0);
    // position 1: delta 1 from left range, delta 2 from right -> 2/3
    CHECK(w[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(w[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    // truncation at the series boundary
    labels = {1, 0, 0, 0};
    w = label_buffer_transform(labels, 8);
    for (int i = 1; i < 4; ++i)
        CHECK(w[i] == doctest::Approx(1.0 - i / 9.0).epsilon(1e-12));

    CHECK_THROWS_AS(label_buffer_transform(labels, -1), std::invalid_argument);
}

TEST_CASE("label_buffer_transform matches the nearest-distance oracle") {
    Rng rng(606);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 10 + static_cast<int>(rng.below(90));
        std::vector<int> labels = random_labels(rng, n, 0.15);
        const int ell = static_cast<int>(rng.below(10));
        for (BufferShape shape : {BufferShape::linear, BufferShape::sqrt_shape}) {
            std::vector<double> got = label_buffer_transform(labels, ell, shape);
            std::vector<double> want = oracle_transform(labels, ell, shape);
            REQUIRE(got.size() == want.size());
            for (size_t i = 0; i < got.size(); ++i)
                CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("transform weights grow pointwise with ell") {
    Rng rng(707);
    std::vector<int> labels = random_labels(rng, 80, 0.1);
    std::vector<double> prev = label_buffer_transform(labels, 0);
    for (int ell = 1; ell <= 12; ++ell) {
        std::vector<double> cur = label_buffer_transform(labels, ell);
        for (size_t i = 0; i < cur.size(); ++i) CHECK(cur[i] >= prev[i] - 1e-15);
        prev = std::move(cur);
    }
}

TEST_CASE("sqrt buffer shape is the square root of the linear ramp") {
    std::vector<int> labels = {0, 0, 0, 1, 0, 0, 0};
    std::vector<double> lin = label_buffer_transform(labels, 3, BufferShape::linear);
    std::vector<double> sq = label_buffer_transform(labels, 3, BufferShape::sqrt_shape);
    for (size_t i = 0; i < lin.size(); ++i)
        CHECK(sq[i] == doctest::Approx(std::sqrt(lin[i])).epsilon(1e-12));
    CHECK(buffer_shape_from_string("linear") == BufferShape::linear);
    CHECK(buffer_shape_from_string("sqrt") == BufferShape::sqrt_shape);
    CHECK_THROWS_AS(buffer_shape_from_string("cubic"), std::invalid_argument);
}

TEST_CASE("default_ell_max is the lower-median run length, floored at 4") {
    auto runs_to_labels = [](const std::vector<int>& runs) {
        std::vector<int> labels;
        for (int r : runs) {
            labels.insert(labels.end(), 3, 0);
            labels.insert(labels.end(), r, 1);
        }
        labels.insert(labels.end(), 3, 0);
        return labels;
    };
    CHECK(default_ell_max(runs_to_labels({2})) == 4);
    CHECK(default_ell_max(runs_to_labels({10})) == 10);
    CHECK(default_ell_max(runs_to_labels({9, 3})) == 4);   // lower median 3
    CHECK(default_ell_max(runs_to_labels({5, 20, 7})) == 7);
    CHECK(default_ell_max(runs_to_labels({6, 8, 12, 30})) == 8);
    CHECK(default_ell_max(std::vector<int>(50, 0)) == 4);  // no anomalies
}

TEST_CASE("vus at ell_max 0 equals the plain AUC bit for bit") {
    Rng rng(808);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 30 + static_cast<int>(rng.below(100));
        ScoredSeries s;
        for (int i = 0; i < n; ++i) s.scores.push_back(rng.uniform(-2.0, 2.0));
        s.labels = random_labels_mixed(rng, n, 0.2);
        CHECK(vus(s, 0, VusKind::roc) == auc_roc(s));
        CHECK(vus(s, 0, VusKind::pr) == auc_pr(s));
    }
}

TEST_CASE("vus matches the double-loop oracle") {
    Rng rng(909);
    for (int trial = 0; trial < 12; ++trial) {
        const int n = 20 + static_cast<int>(rng.below(60));
        ScoredSeries s;
        for (int i = 0; i < n; ++i)
            s.scores.push_back(trial % 2 ? rng.uniform(-1.0, 1.0)
                                         : static_cast<double>(rng.below(10)));
        s.labels = random_labels_mixed(rng, n, 0.15);
        if (trial % 3 == 0) {
            s.excluded.assign(n, 0);
            for (int i = 1; i + 1 < n; ++i) s.excluded[i] = rng.uniform() < 0.1 ? 1 : 0;
        }
        const int ell_max = 1 + static_cast<int>(rng.below(6));
        for (VusKind kind : {VusKind::roc, VusKind::pr}) {
            const double got = vus(s, ell_max, kind);
            const double want = oracle_vus(s, ell_max, kind, BufferShape::linear);
            CHECK(got == doctest::Approx(want).epsilon(1e-9));
        }
    }
}

TEST_CASE("vus applies the transform before dropping excluded positions") {
    // The excluded point sits between the anomaly and a kept neighbour; the
    // neighbour's weight must reflect the true distance 2, not 1.
    ScoredSeries s;
    s.scores = {5.0, 4.0, 3.0, 2.0, 1.0};
    s.labels = {1, 0, 0, 0, 0};
    s.excluded = {0, 1, 0, 0, 0};
    // Full-timeline weights: ell=0 -> {1,0,0,0,0}; ell=1 -> {1,1/2,0,0,0};
    // ell=2 -> {1,2/3,1/3,0,0}. Dropping index 1 (weight 1/2 resp. 2/3 lands
    // on the excluded point) leaves index 2 with its distance-2 weight.
    std::vector<double> kept_scores = {5.0, 3.0, 2.0, 1.0};
    const double expected =
        (weighted_auc_roc(kept_scores, std::vector<double>{1, 0, 0, 0}) +
         weighted_auc_roc(kept_scores, std::vector<double>{1, 0, 0, 0}) +
         weighted_auc_roc(kept_scores, std::vector<double>{1.0, 1.0 / 3.0, 0.0, 0.0})) /
        3.0;
    CHECK(vus(s, 2, VusKind::roc) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("aggregate averages per domain and over the corpus") {
    DomainIndex domains;
    domains.add("SYN", "Sine");
    domains.add("SYN", "Saw");

    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<SeriesMetrics> rows(3);
    rows[0] = {0, "SYN", "Sine", 0.8, 0.9, 0.7, 0.85};
    rows[1] = {1, "SYN", "Sine", 0.6, 0.7, nan, 0.75};
    rows[2] = {2, "SYN", "Saw", 0.4, 0.5, 0.3, 0.45};

    EvalReport rep = aggregate(rows, domains);
    REQUIRE(rep.domain_means.size() == 2);
    CHECK(rep.domain_means[0].dataset == "SYN");
    CHECK(rep.domain_means[0].subdomain == "Sine");
    CHECK(rep.domain_means[0].count == 2);
    CHECK(rep.domain_means[0].auc_pr == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(rep.domain_means[0].vus_pr == doctest::Approx(0.7).epsilon(1e-12));  // NaN skipped
    CHECK(rep.domain_means[1].auc_roc == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rep.domain_means[1].count == 1);

    CHECK(rep.corpus_mean.count == 3);
    CHECK(rep.corpus_mean.auc_pr == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(rep.corpus_mean.vus_pr == doctest::Approx(0.5).epsilon(1e-12));

    // a domain with no series reports NaN means
    domains.add("SYN", "AR");
    rep = aggregate(rows, domains);
    CHECK(std::isnan(rep.domain_means[2].auc_pr));
    CHECK(rep.domain_means[2].count == 0);

    rows[0].dataset = "OTHER";
    CHECK_THROWS_AS(aggregate(rows, domains), std::invalid_argument);
}

TEST_CASE("format_percent renders two decimals") {
    CHECK(format_percent(0.3635) == "36.35");
    CHECK(format_percent(1.0) == "100.00");
    CHECK(format_percent(0.0) == "0.00");
    CHECK(format_percent(0.123456) == "12.35");
    CHECK(format_percent(std::numeric_limits<double>::quiet_NaN()) == "nan");
}
