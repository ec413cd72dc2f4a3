#pragma once

#include <string>
#include <utility>
#include <vector>

#include "matrix.hpp"

namespace pmad {

// Labeled univariate series plus the metadata encoded in its filename.
// train_len is the fixed train/test split point; train_used is the leading
// prefix of the train split actually used for fitting (few-shot runs shrink
// it, otherwise it equals train_len).
struct SeriesRecord {
    std::vector<double> values;
    std::vector<int> labels;  // 1 = anomalous timestep
    std::string dataset;
    std::string subdomain;
    int train_len = 0;
    long long first_anomaly = -1;
    std::string source_file;
    int train_used = 0;

    int length() const { return static_cast<int>(values.size()); }
    std::string domain_label() const { return dataset + "/" + subdomain; }
};

struct RawWindow {
    int start = 0;
    int len = 0;
};

struct NormStats {
    double mean = 0.0;
    double std_dev = 0.0;
};

// A window as the model sees it: P observed patches in the leading rows of
// an N x L matrix, remaining rows exactly zero, mask 1 for observed rows.
struct PatchedWindow {
    Matrix patches;
    std::vector<int> mask;
    int observed = 0;  // P
    int series_id = -1;
    int start = 0;
    NormStats norm;
};

// Distinct (dataset, subdomain) labels in first-appearance order; ids dense.
class DomainIndex {
public:
    int add(const std::string& dataset, const std::string& subdomain);
    int id_of(const std::string& dataset, const std::string& subdomain) const;  // -1 if absent
    int size() const { return static_cast<int>(labels_.size()); }
    const std::vector<std::pair<std::string, std::string>>& labels() const { return labels_; }
    std::string label(int id) const;

private:
    std::vector<std::pair<std::string, std::string>> labels_;
};

struct ParsedName {
    std::string dataset;
    std::string subdomain;
    int train_len = 0;
    long long first_anomaly = -1;
};

// `{index}_{Dataset}_id_{id}_{Subdomain}_tr_{n}_1st_{m}.csv`
ParsedName parse_filename(const std::string& name);
std::string format_filename(int index, const std::string& dataset, int id,
                            const std::string& subdomain, int train_len,
                            long long first_anomaly);

SeriesRecord load_series(const std::string& path);

// Non-overlapping windows over [begin, end); a trailing segment shorter
// than one patch is dropped.
std::vector<RawWindow> window_range(int begin, int end, int win, int patch_len);
std::vector<RawWindow> window_series(const SeriesRecord& s, int win, int patch_len);

// (x - mean) / max(std, eps), population std, per window.
std::vector<double> standardize(const std::vector<double>& window, double eps,
                                NormStats* stats = nullptr);

// Splits a (standardized) window into P = floor(len / L) patches and zero-
// pads to N rows. Fails if the window exceeds N*L points or is shorter
// than one patch.
PatchedWindow patchify(const std::vector<double>& window, int patch_len, int max_patches);

// standardize + patchify + origin bookkeeping for one raw window.
PatchedWindow patch_window(const SeriesRecord& s, int series_id, RawWindow w, int patch_len,
                           int max_patches, double eps);

DomainIndex build_domain_index(const std::vector<SeriesRecord>& records);

struct Corpus {
    std::vector<SeriesRecord> records;  // sorted by file name
    DomainIndex domains;
    std::vector<int> domain_of;  // record index -> domain id
};

// Loads every *.csv in dir (lexicographic order) and builds the domain index.
Corpus load_corpus(const std::string& dir);

}  // namespace pmad
