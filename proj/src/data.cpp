#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pmad {

int DomainIndex::add(const std::string& dataset, const std::string& subdomain) {
    int existing = id_of(dataset, subdomain);
    if (existing >= 0) return existing;
    labels_.emplace_back(dataset, subdomain);
    return static_cast<int>(labels_.size()) - 1;
}

int DomainIndex::id_of(const std::string& dataset, const std::string& subdomain) const {
    for (size_t i = 0; i < labels_.size(); ++i)
        if (labels_[i].first == dataset && labels_[i].second == subdomain)
            return static_cast<int>(i);
    return -1;
}

std::string DomainIndex::label(int id) const {
    if (id < 0 || id >= size()) throw std::invalid_argument("DomainIndex: id out of range");
    return labels_[id].first + "/" + labels_[id].second;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

bool parse_int(const std::string& tok, long long& out) {
    if (tok.empty()) return false;
    size_t pos = 0;
    try {
        out = std::stoll(tok, &pos);
    } catch (const std::exception&) {
        return false;
    }
    return pos == tok.size();
}

[[noreturn]] void parse_fail(const std::string& name, const std::string& why) {
    throw std::runtime_error("parse_filename: " + why + " in \"" + name + "\"");
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

ParsedName parse_filename(const std::string& name) {
    std::string stem = name;
    size_t slash = stem.find_last_of('/');
    if (slash != std::string::npos) stem = stem.substr(slash + 1);
    if (stem.size() < 4 || stem.substr(stem.size() - 4) != ".csv")
        parse_fail(name, "missing .csv suffix");
    stem = stem.substr(0, stem.size() - 4);

    std::vector<std::string> tok = split(stem, '_');
    // {index}_{Dataset}_id_{id}_{Subdomain}_tr_{n}_1st_{m}
    if (tok.size() != 9) parse_fail(name, "expected 9 underscore-separated tokens");
    long long index, file_id, tr, first;
    if (!parse_int(tok[0], index)) parse_fail(name, "non-numeric index");
    if (tok[2] != "id") parse_fail(name, "missing id marker");
    if (!parse_int(tok[3], file_id)) parse_fail(name, "non-numeric id");
    if (tok[5] != "tr") parse_fail(name, "missing tr marker");
    if (!parse_int(tok[6], tr)) parse_fail(name, "non-numeric train length");
    if (tok[7] != "1st") parse_fail(name, "missing 1st marker");
    if (!parse_int(tok[8], first)) parse_fail(name, "non-numeric first-anomaly index");
    if (tok[1].empty() || tok[4].empty()) parse_fail(name, "empty dataset or subdomain token");

    ParsedName p;
    p.dataset = tok[1];
    p.subdomain = tok[4];
    p.train_len = static_cast<int>(tr);
    p.first_anomaly = first;
    return p;
}

std::string format_filename(int index, const std::string& dataset, int id,
                            const std::string& subdomain, int train_len,
                            long long first_anomaly) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%03d", index);
    std::ostringstream os;
    os << buf << "_" << dataset << "_id_" << id << "_" << subdomain << "_tr_" << train_len
       << "_1st_" << first_anomaly << ".csv";
    return os.str();
}

SeriesRecord load_series(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_series: cannot open " + path);

    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("load_series: empty file " + path);
    std::vector<std::string> cols = split(trim(header), ',');
    int label_col = -1, value_col = -1;
    for (size_t i = 0; i < cols.size(); ++i) {
        if (trim(cols[i]) == "Label") {
            if (label_col >= 0)
                throw std::runtime_error("load_series: duplicate Label column in " + path);
            label_col = static_cast<int>(i);
        } else {
            if (value_col >= 0)
                throw std::runtime_error("load_series: more than one value column in " + path);
            value_col = static_cast<int>(i);
        }
    }
    if (label_col < 0) throw std::runtime_error("load_series: missing Label column in " + path);
    if (value_col < 0) throw std::runtime_error("load_series: missing value column in " + path);

    SeriesRecord rec;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        ++row;
        std::vector<std::string> f = split(line, ',');
        if (static_cast<int>(f.size()) <= std::max(label_col, value_col))
            throw std::runtime_error("load_series: short row " + std::to_string(row) + " in " +
                                     path);
        char* end = nullptr;
        const std::string vtok = trim(f[value_col]);
        double v = std::strtod(vtok.c_str(), &end);
        if (end == vtok.c_str() || *end != '\0' || !std::isfinite(v))
            throw std::runtime_error("load_series: bad value at row " + std::to_string(row) +
                                     " in " + path);
        const std::string ltok = trim(f[label_col]);
        double lv = std::strtod(ltok.c_str(), &end);
        if (end == ltok.c_str() || *end != '\0' || (lv != 0.0 && lv != 1.0))
            throw std::runtime_error("load_series: non-binary label at row " +
                                     std::to_string(row) + " in " + path);
        rec.values.push_back(v);
        rec.labels.push_back(lv == 1.0 ? 1 : 0);
    }
    if (rec.values.empty()) throw std::runtime_error("load_series: no data rows in " + path);

    ParsedName p = parse_filename(path);
    rec.dataset = p.dataset;
    rec.subdomain = p.subdomain;
    rec.train_len = p.train_len;
    rec.first_anomaly = p.first_anomaly;
    rec.source_file = path;
    rec.train_used = rec.train_len;
    if (rec.train_len <= 0 || rec.train_len >= rec.length())
        throw std::runtime_error("load_series: train_len " + std::to_string(rec.train_len) +
                                 " out of range for T=" + std::to_string(rec.length()) + " in " +
                                 path);
    return rec;
}

std::vector<RawWindow> window_range(int begin, int end, int win, int patch_len) {
    if (win <= 0) throw std::invalid_argument("window_range: win must be positive");
    if (patch_len <= 0) throw std::invalid_argument("window_range: patch_len must be positive");
    std::vector<RawWindow> out;
    for (int s = begin; s < end; s += win) {
        int len = std::min(win, end - s);
        if (len < patch_len) break;  // tail shorter than one patch
        out.push_back({s, len});
    }
    return out;
}

std::vector<RawWindow> window_series(const SeriesRecord& s, int win, int patch_len) {
    return window_range(0, s.length(), win, patch_len);
}

std::vector<double> standardize(const std::vector<double>& window, double eps, NormStats* stats) {
    if (window.empty()) throw std::invalid_argument("standardize: empty window");
    double mean = 0.0;
    for (double v : window) mean += v;
    mean /= static_cast<double>(window.size());
    double var = 0.0;
    for (double v : window) var += (v - mean) * (v - mean);
    var /= static_cast<double>(window.size());
    const double sd = std::sqrt(var);
    const double denom = std::max(sd, eps);
    std::vector<double> out(window.size());
    for (size_t i = 0; i < window.size(); ++i) out[i] = (window[i] - mean) / denom;
    if (stats) {
        stats->mean = mean;
        stats->std_dev = sd;
    }
    return out;
}

PatchedWindow patchify(const std::vector<double>& window, int patch_len, int max_patches) {
    const int len = static_cast<int>(window.size());
    if (len < patch_len) throw std::invalid_argument("patchify: window shorter than one patch");
    if (len > patch_len * max_patches)
        throw std::invalid_argument("patchify: window exceeds N*L points");
    const int P = len / patch_len;
    PatchedWindow pw;
    pw.patches = Matrix(max_patches, patch_len);
    pw.mask.assign(max_patches, 0);
    pw.observed = P;
    for (int p = 0; p < P; ++p) {
        pw.mask[p] = 1;
        for (int j = 0; j < patch_len; ++j) pw.patches.at(p, j) = window[p * patch_len + j];
    }
    return pw;
}

PatchedWindow patch_window(const SeriesRecord& s, int series_id, RawWindow w, int patch_len,
                           int max_patches, double eps) {
    std::vector<double> raw(s.values.begin() + w.start, s.values.begin() + w.start + w.len);
    NormStats stats;
    std::vector<double> standardized = standardize(raw, eps, &stats);
    PatchedWindow pw = patchify(standardized, patch_len, max_patches);
    pw.series_id = series_id;
    pw.start = w.start;
    pw.norm = stats;
    return pw;
}

DomainIndex build_domain_index(const std::vector<SeriesRecord>& records) {
    if (records.empty()) throw std::invalid_argument("build_domain_index: no records");
    DomainIndex idx;
    for (const SeriesRecord& r : records) idx.add(r.dataset, r.subdomain);
    return idx;
}

Corpus load_corpus(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> files;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.size() > 4 && name.substr(name.size() - 4) == ".csv")
            files.push_back(entry.path().string());
    }
    if (ec) throw std::invalid_argument("load_corpus: cannot read directory " + dir);
    if (files.empty()) throw std::invalid_argument("load_corpus: no csv files in " + dir);
    std::sort(files.begin(), files.end());

    Corpus corpus;
    for (const std::string& f : files) corpus.records.push_back(load_series(f));
    corpus.domains = build_domain_index(corpus.records);
    for (const SeriesRecord& r : corpus.records)
        corpus.domain_of.push_back(corpus.domains.id_of(r.dataset, r.subdomain));
    return corpus;
}

}  // namespace pmad
