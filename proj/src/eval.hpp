#pragma once

#include <string>
#include <vector>

#include "data.hpp"
#include "metrics.hpp"
#include "model.hpp"

namespace pmad {

// Reconstruction errors for one series' test region [train_len, T).
struct SeriesScores {
    ScoredSeries scored;  // index 0 corresponds to absolute time test_begin
    int test_begin = 0;
};

// Scores a series in inference mode. bank_domain_id is the model-side domain
// id (-1 when the series' domain is unknown to the bank, e.g. leave-one-out);
// forced-item strategies fall back to top-K in that case. Points not covered
// by any observed patch are excluded. When util is given, full_lambda of
// every window is accumulated onto util row util_row.
SeriesScores score_series(const Model& model, const SeriesRecord& rec, int bank_domain_id,
                          Matrix* util = nullptr, int util_row = -1);

struct MetricOptions {
    int ell_max = -1;  // -1: per-series default_ell_max
    BufferShape shape = BufferShape::linear;
};

struct CorpusEval {
    EvalReport report;
    std::vector<SeriesScores> scores;  // corpus order
    Matrix utilization;                // raw (#corpus domains) x M accumulator
};

CorpusEval evaluate_corpus(const Model& model, const Corpus& corpus, const MetricOptions& opts);

// Artifact writers. All numeric content is deterministic for identical
// inputs; no wall-clock data is emitted.
void write_report_csv(const EvalReport& rep, const std::string& path);
void write_scores_csv(const Corpus& corpus, const std::vector<SeriesScores>& scores,
                      const std::string& path);
// Row-normalized utilization, one row per domain; rows with no observations
// stay zero and carry the empty flag.
void write_heatmap_csv(const Matrix& util, const DomainIndex& domains, const std::string& path);

}  // namespace pmad
