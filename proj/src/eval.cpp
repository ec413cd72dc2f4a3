#include "eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace pmad {

SeriesScores score_series(const Model& model, const SeriesRecord& rec, int bank_domain_id,
                          Matrix* util, int util_row) {
    const ModelConfig& cfg = model.cfg;
    SeriesScores out;
    out.test_begin = rec.train_len;
    const int test_len = rec.length() - rec.train_len;
    out.scored.scores.assign(test_len, 0.0);
    out.scored.excluded.assign(test_len, 1);
    out.scored.labels.assign(rec.labels.begin() + rec.train_len, rec.labels.end());

    const int forced = cfg.has_memory() ? resolve_forced_item(cfg, model.bank, bank_domain_id)
                                        : -1;
    for (const RawWindow& w :
         window_range(rec.train_len, rec.length(), cfg.window, cfg.patch_len)) {
        PatchedWindow pw = patch_window(rec, -1, w, cfg.patch_len, cfg.max_patches, cfg.eps);
        Tape t;
        TapeParams tp = stage_params(t, model.params, /*trainable=*/false);
        ForwardResult fr = model_forward(t, tp, cfg, model.bank, pw, forced);
        WindowScores ws = anomaly_score(pw, t.value(fr.x_hat));
        for (size_t i = 0; i < ws.scores.size(); ++i) {
            const int at = w.start - rec.train_len + static_cast<int>(i);
            out.scored.scores[at] = ws.scores[i];
            out.scored.excluded[at] = 0;
        }
        if (util && !fr.selection.full_lambda.empty()) {
            if (util_row < 0) throw std::invalid_argument("score_series: util_row required");
            accumulate_utilization(*util, util_row, fr.selection);
        }
    }
    return out;
}

CorpusEval evaluate_corpus(const Model& model, const Corpus& corpus, const MetricOptions& opts) {
    CorpusEval out;
    if (model.cfg.has_memory())
        out.utilization = Matrix(corpus.domains.size(), model.bank.M);

    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<SeriesMetrics> rows;
    for (size_t i = 0; i < corpus.records.size(); ++i) {
        const SeriesRecord& rec = corpus.records[i];
        const int bank_domain = model.domains.id_of(rec.dataset, rec.subdomain);
        SeriesScores ss =
            score_series(model, rec, bank_domain,
                         model.cfg.has_memory() ? &out.utilization : nullptr,
                         corpus.domain_of[i]);

        SeriesMetrics m;
        m.series_id = static_cast<int>(i);
        m.dataset = rec.dataset;
        m.subdomain = rec.subdomain;
        const int ell =
            opts.ell_max >= 0 ? opts.ell_max : default_ell_max(ss.scored.labels);
        try {
            m.auc_pr = auc_pr(ss.scored);
            m.auc_roc = auc_roc(ss.scored);
            m.vus_pr = vus(ss.scored, ell, VusKind::pr, opts.shape);
            m.vus_roc = vus(ss.scored, ell, VusKind::roc, opts.shape);
        } catch (const MetricUndefined&) {
            m.auc_pr = m.auc_roc = m.vus_pr = m.vus_roc = nan;
        }
        rows.push_back(std::move(m));
        out.scores.push_back(std::move(ss));
    }
    out.report = aggregate(rows, corpus.domains);
    return out;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    return out;
}

void metric_cells(std::ofstream& out, double pr, double roc, double vpr, double vroc) {
    out << format_percent(pr) << "," << format_percent(roc) << "," << format_percent(vpr) << ","
        << format_percent(vroc);
}

}  // namespace

void write_report_csv(const EvalReport& rep, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "scope,dataset,subdomain,series,auc_pr,auc_roc,vus_pr,vus_roc,count\n";
    for (const SeriesMetrics& m : rep.series) {
        out << "series," << m.dataset << "," << m.subdomain << "," << m.series_id << ",";
        metric_cells(out, m.auc_pr, m.auc_roc, m.vus_pr, m.vus_roc);
        out << ",1\n";
    }
    for (const MetricMeans& m : rep.domain_means) {
        out << "domain," << m.dataset << "," << m.subdomain << ",,";
        metric_cells(out, m.auc_pr, m.auc_roc, m.vus_pr, m.vus_roc);
        out << "," << m.count << "\n";
    }
    out << "corpus,,,,";
    metric_cells(out, rep.corpus_mean.auc_pr, rep.corpus_mean.auc_roc, rep.corpus_mean.vus_pr,
                 rep.corpus_mean.vus_roc);
    out << "," << rep.corpus_mean.count << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_scores_csv(const Corpus& corpus, const std::vector<SeriesScores>& scores,
                      const std::string& path) {
    if (corpus.records.size() != scores.size())
        throw std::invalid_argument("write_scores_csv: corpus/scores size mismatch");
    std::ofstream out = open_out(path);
    out << "series,t,score,label,excluded\n";
    char buf[64];
    for (size_t i = 0; i < scores.size(); ++i) {
        const SeriesScores& ss = scores[i];
        for (size_t k = 0; k < ss.scored.scores.size(); ++k) {
            std::snprintf(buf, sizeof(buf), "%.17g", ss.scored.scores[k]);
            out << i << "," << ss.test_begin + static_cast<int>(k) << "," << buf << ","
                << ss.scored.labels[k] << "," << ss.scored.excluded[k] << "\n";
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_heatmap_csv(const Matrix& util, const DomainIndex& domains, const std::string& path) {
    if (util.rows != domains.size())
        throw std::invalid_argument("write_heatmap_csv: row/domain mismatch");
    std::vector<int> empty_rows;
    Matrix norm = row_normalize_utilization(util, &empty_rows);
    std::vector<int> is_empty(util.rows, 0);
    for (int r : empty_rows) is_empty[r] = 1;

    std::ofstream out = open_out(path);
    out << "domain";
    for (int j = 0; j < util.cols; ++j) out << ",item_" << j;
    out << ",empty\n";
    char buf[64];
    for (int r = 0; r < norm.rows; ++r) {
        out << domains.label(r);
        for (int j = 0; j < norm.cols; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", norm.at(r, j));
            out << "," << buf;
        }
        out << "," << is_empty[r] << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace pmad
