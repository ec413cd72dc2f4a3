#include "harness.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "synth.hpp"

namespace pmad {

namespace {

std::string trim(const std::string& s) {
    const size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw std::invalid_argument("config: bad value for " + key + ": \"" + value + "\"");
}

long long parse_ll(const std::string& key, const std::string& value) {
    size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(value, &pos);
    } catch (const std::exception&) {
        bad_value(key, value);
    }
    if (pos != value.size()) bad_value(key, value);
    return v;
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
    size_t pos = 0;
    uint64_t v = 0;
    try {
        v = std::stoull(value, &pos);
    } catch (const std::exception&) {
        bad_value(key, value);
    }
    if (pos != value.size()) bad_value(key, value);
    return v;
}

double parse_real(const std::string& key, const std::string& value) {
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &pos);
    } catch (const std::exception&) {
        bad_value(key, value);
    }
    if (pos != value.size()) bad_value(key, value);
    return v;
}

bool parse_flag(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    bad_value(key, value);
}

std::string real_str(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void apply_kv(RunConfig& rc, const std::string& key, const std::string& value) {
    TrainConfig& t = rc.train;
    ModelConfig& m = t.model;
    if (key == "data")
        rc.data_dir = value;
    else if (key == "out")
        rc.out_dir = value;
    else if (key == "mode")
        t.mode = mode_from_string(value);
    else if (key == "strategy")
        m.strategy = strategy_from_string(value);
    else if (key == "lr")
        t.lr = parse_real(key, value);
    else if (key == "epochs")
        t.epochs = static_cast<int>(parse_ll(key, value));
    else if (key == "batch_size")
        t.batch_size = static_cast<int>(parse_ll(key, value));
    else if (key == "seed")
        t.seed = parse_u64(key, value);
    else if (key == "ratio")
        t.train_ratio = parse_real(key, value);
    else if (key == "mem_samples")
        t.mem_samples = static_cast<int>(parse_ll(key, value));
    else if (key == "encoder_init")
        t.encoder_init = value;
    else if (key == "window")
        m.window = static_cast<int>(parse_ll(key, value));
    else if (key == "patch_len")
        m.patch_len = static_cast<int>(parse_ll(key, value));
    else if (key == "max_patches")
        m.max_patches = static_cast<int>(parse_ll(key, value));
    else if (key == "d_model")
        m.d_model = static_cast<int>(parse_ll(key, value));
    else if (key == "d_ff")
        m.d_ff = static_cast<int>(parse_ll(key, value));
    else if (key == "n_layers")
        m.n_layers = static_cast<int>(parse_ll(key, value));
    else if (key == "n_heads")
        m.n_heads = static_cast<int>(parse_ll(key, value));
    else if (key == "d_hidden")
        m.d_hidden = static_cast<int>(parse_ll(key, value));
    else if (key == "topk")
        m.mem.topk = static_cast<int>(parse_ll(key, value));
    else if (key == "tau_select")
        m.mem.tau_select = parse_real(key, value);
    else if (key == "tau_attn")
        m.mem.tau_attn = parse_real(key, value);
    else if (key == "renormalize_topk")
        m.mem.renormalize_topk = parse_flag(key, value);
    else if (key == "mem_items")
        m.mem_items = static_cast<int>(parse_ll(key, value));
    else if (key == "eps")
        m.eps = parse_real(key, value);
    else if (key == "ell_max")
        rc.metrics.ell_max = static_cast<int>(parse_ll(key, value));
    else if (key == "buffer_shape")
        rc.metrics.shape = buffer_shape_from_string(value);
    else
        throw std::invalid_argument("config: unknown key \"" + key + "\"");
    rc.explicit_keys.insert(key);
}

std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not key = value in " + path);
        pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return pairs;
}

RunConfig load_config_file(const std::string& path) {
    RunConfig rc;
    for (const auto& [key, value] : parse_config_file(path)) apply_kv(rc, key, value);
    return rc;
}

void merge_overrides(RunConfig& rc, const std::vector<std::pair<std::string, std::string>>& kv) {
    for (const auto& [key, value] : kv) apply_kv(rc, key, value);
}

std::string render_config(const RunConfig& rc) {
    const TrainConfig& t = rc.train;
    const ModelConfig& m = t.model;
    std::ostringstream os;
    os << "data = " << rc.data_dir << "\n";
    os << "out = " << rc.out_dir << "\n";
    os << "mode = " << to_string(t.mode) << "\n";
    os << "strategy = " << to_string(m.strategy) << "\n";
    os << "lr = " << real_str(t.lr) << "\n";
    os << "epochs = " << t.epochs << "\n";
    os << "batch_size = " << t.batch_size << "\n";
    os << "seed = " << t.seed << "\n";
    os << "ratio = " << real_str(t.train_ratio) << "\n";
    os << "mem_samples = " << t.mem_samples << "\n";
    os << "encoder_init = " << t.encoder_init << "\n";
    os << "window = " << m.window << "\n";
    os << "patch_len = " << m.patch_len << "\n";
    os << "max_patches = " << m.max_patches << "\n";
    os << "d_model = " << m.d_model << "\n";
    os << "d_ff = " << m.d_ff << "\n";
    os << "n_layers = " << m.n_layers << "\n";
    os << "n_heads = " << m.n_heads << "\n";
    os << "d_hidden = " << m.d_hidden << "\n";
    os << "topk = " << m.mem.topk << "\n";
    os << "tau_select = " << real_str(m.mem.tau_select) << "\n";
    os << "tau_attn = " << real_str(m.mem.tau_attn) << "\n";
    os << "renormalize_topk = " << (m.mem.renormalize_topk ? 1 : 0) << "\n";
    os << "mem_items = " << m.mem_items << "\n";
    os << "eps = " << real_str(m.eps) << "\n";
    os << "ell_max = " << rc.metrics.ell_max << "\n";
    os << "buffer_shape = " << (rc.metrics.shape == BufferShape::linear ? "linear" : "sqrt")
       << "\n";
    return os.str();
}

void write_resolved_config(const RunConfig& rc, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::string path = (std::filesystem::path(dir) / "config_resolved.txt").string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << render_config(rc);
    if (!out) throw std::runtime_error("write failed: " + path);
}

int thread_budget() {
    const char* env = std::getenv("PMAD_THREADS");
    if (!env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) return 1;
    return static_cast<int>(v);
}

namespace {

// Runs f(0..n-1) across up to thread_budget() workers; first exception wins.
template <typename F>
void parallel_cells(int n, F f) {
    const int workers = std::min(thread_budget(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    auto body = [&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

Corpus load_data(const RunConfig& rc) {
    if (rc.data_dir.empty()) throw std::invalid_argument("config: data directory not set");
    return load_corpus(rc.data_dir);
}

std::string joined(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void write_train_sizes(const std::vector<SeriesRecord>& records,
                       const std::vector<int>& effective, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "series,file,train_len,train_used\n";
    for (size_t i = 0; i < records.size(); ++i)
        out << i << "," << std::filesystem::path(records[i].source_file).filename().string()
            << "," << records[i].train_len << "," << effective[i] << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::string metric_row(double pr, double roc, double vpr, double vroc) {
    return format_percent(pr) + "," + format_percent(roc) + "," + format_percent(vpr) + "," +
           format_percent(vroc);
}

void require_out(const RunConfig& rc) {
    if (rc.out_dir.empty()) throw std::invalid_argument("config: output directory not set");
    std::filesystem::create_directories(rc.out_dir);
}

}  // namespace

void cmd_synth(uint64_t seed, const std::string& out_dir) {
    if (out_dir.empty()) throw std::invalid_argument("synth: output directory not set");
    write_corpus(default_suite(seed), out_dir);
    RunConfig echo;
    echo.train.seed = seed;
    echo.out_dir = out_dir;
    write_resolved_config(echo, out_dir);
}

void cmd_train(const RunConfig& rc) {
    require_out(rc);
    Corpus corpus = load_data(rc);
    write_resolved_config(rc, rc.out_dir);

    if (rc.train.mode == TrainMode::multi_domain) {
        TrainResult tr = train(corpus.records, rc.train);
        save_checkpoint(tr.model, joined(rc.out_dir, "model.ckpt"));
        write_train_log(tr.log, joined(rc.out_dir, "train_log.csv"));
        write_train_sizes(corpus.records, tr.effective_train_len,
                          joined(rc.out_dir, "train_sizes.csv"));
        if (tr.model.cfg.has_memory())
            write_heatmap_csv(tr.utilization, tr.model.domains,
                              joined(rc.out_dir, "heatmap_train.csv"));
        return;
    }

    // per_dataset: one independent model per series
    std::vector<int> effective(corpus.records.size(), 0);
    TrainConfig cell = rc.train;
    parallel_cells(static_cast<int>(corpus.records.size()), [&](int i) {
        char tag[32];
        std::snprintf(tag, sizeof(tag), "%03d", i);
        TrainResult tr = train({corpus.records[i]}, cell);
        save_checkpoint(tr.model, joined(rc.out_dir, std::string("model_") + tag + ".ckpt"));
        write_train_log(tr.log, joined(rc.out_dir, std::string("train_log_") + tag + ".csv"));
        effective[i] = tr.effective_train_len[0];
    });
    write_train_sizes(corpus.records, effective, joined(rc.out_dir, "train_sizes.csv"));
}

namespace {

void check_ckpt_key(const RunConfig& rc, const std::string& key, int configured, int stored) {
    if (rc.explicit_keys.count(key) && configured != stored)
        throw std::invalid_argument("eval: config " + key + "=" + std::to_string(configured) +
                                    " conflicts with checkpoint value " + std::to_string(stored));
}

}  // namespace

void cmd_eval(const RunConfig& rc, const std::string& checkpoint) {
    require_out(rc);
    Corpus corpus = load_data(rc);
    Model model = load_checkpoint(checkpoint);

    const ModelConfig& mc = rc.train.model;
    check_ckpt_key(rc, "window", mc.window, model.cfg.window);
    check_ckpt_key(rc, "patch_len", mc.patch_len, model.cfg.patch_len);
    check_ckpt_key(rc, "max_patches", mc.max_patches, model.cfg.max_patches);
    check_ckpt_key(rc, "d_model", mc.d_model, model.cfg.d_model);
    check_ckpt_key(rc, "d_ff", mc.d_ff, model.cfg.d_ff);
    check_ckpt_key(rc, "n_layers", mc.n_layers, model.cfg.n_layers);
    check_ckpt_key(rc, "n_heads", mc.n_heads, model.cfg.n_heads);
    check_ckpt_key(rc, "d_hidden", mc.d_hidden, model.cfg.d_hidden);
    check_ckpt_key(rc, "topk", mc.mem.topk, model.cfg.mem.topk);

    write_resolved_config(rc, rc.out_dir);
    CorpusEval ev = evaluate_corpus(model, corpus, rc.metrics);
    write_report_csv(ev.report, joined(rc.out_dir, "report.csv"));
    write_scores_csv(corpus, ev.scores, joined(rc.out_dir, "scores.csv"));
    if (model.cfg.has_memory())
        write_heatmap_csv(ev.utilization, corpus.domains, joined(rc.out_dir, "heatmap.csv"));
}

void cmd_ablate(const RunConfig& rc, const std::vector<std::string>& encoders,
                const std::vector<std::string>& strategies) {
    require_out(rc);
    if (encoders.empty() || strategies.empty())
        throw std::invalid_argument("ablate: empty grid");
    for (const std::string& e : encoders)
        if (e != "scratch" && e != "pretrained")
            throw std::invalid_argument("ablate: unknown encoder \"" + e + "\"");
    Corpus corpus = load_data(rc);
    write_resolved_config(rc, rc.out_dir);

    // stand-in for a pre-trained encoder: a reconstruction-only model fitted
    // on the same corpus, then loaded as encoder_init
    std::string pretrain_path;
    bool needs_pretrain = false;
    for (const std::string& e : encoders) needs_pretrain |= e == "pretrained";
    if (needs_pretrain) {
        TrainConfig pre = rc.train;
        pre.mode = TrainMode::multi_domain;
        pre.model.strategy = MemoryStrategy::none;
        pre.encoder_init.clear();
        TrainResult tr = train(corpus.records, pre);
        pretrain_path = joined(rc.out_dir, "pretrain.ckpt");
        save_checkpoint(tr.model, pretrain_path);
    }

    struct Cell {
        std::string encoder, strategy, row;
    };
    std::vector<Cell> cells;
    for (const std::string& e : encoders)
        for (const std::string& s : strategies) cells.push_back({e, s, ""});

    parallel_cells(static_cast<int>(cells.size()), [&](int i) {
        TrainConfig cfg = rc.train;
        cfg.mode = TrainMode::multi_domain;
        cfg.model.strategy = strategy_from_string(cells[i].strategy);
        cfg.encoder_init = cells[i].encoder == "pretrained" ? pretrain_path : "";
        TrainResult tr = train(corpus.records, cfg);
        CorpusEval ev = evaluate_corpus(tr.model, corpus, rc.metrics);
        const MetricMeans& m = ev.report.corpus_mean;
        cells[i].row = cells[i].encoder + "," + cells[i].strategy + "," +
                       metric_row(m.auc_pr, m.auc_roc, m.vus_pr, m.vus_roc);
    });

    const std::string path = joined(rc.out_dir, "ablate.csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "encoder,strategy,auc_pr,auc_roc,vus_pr,vus_roc\n";
    for (const Cell& c : cells) out << c.row << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

void cmd_sweep(const RunConfig& rc, std::vector<double> ratios,
               const std::vector<int>& k_values, const std::vector<std::string>& strategies) {
    require_out(rc);
    if (ratios.empty() || k_values.empty() || strategies.empty())
        throw std::invalid_argument("sweep: empty grid");
    for (double r : ratios)
        if (!(r > 0.0 && r <= 1.0))
            throw std::invalid_argument("sweep: ratio must lie in (0, 1]");
    std::sort(ratios.begin(), ratios.end());  // monotone ratio column
    Corpus corpus = load_data(rc);
    write_resolved_config(rc, rc.out_dir);

    struct Cell {
        std::string strategy;
        double ratio;
        int k;
        std::string row;
    };
    std::vector<Cell> cells;
    for (const std::string& s : strategies)
        for (double r : ratios)
            for (int k : k_values) cells.push_back({s, r, k, ""});

    parallel_cells(static_cast<int>(cells.size()), [&](int i) {
        TrainConfig cfg = rc.train;
        cfg.train_ratio = cells[i].ratio;
        cfg.model.strategy = strategy_from_string(cells[i].strategy);
        cfg.model.mem.topk = cells[i].k;  // rejected downstream if k > M
        TrainResult tr = train(corpus.records, cfg);
        CorpusEval ev = evaluate_corpus(tr.model, corpus, rc.metrics);
        const MetricMeans& m = ev.report.corpus_mean;
        cells[i].row = real_str(cells[i].ratio) + "," + std::to_string(cells[i].k) + "," +
                       cells[i].strategy + "," +
                       metric_row(m.auc_pr, m.auc_roc, m.vus_pr, m.vus_roc);
    });

    const std::string path = joined(rc.out_dir, "sweep.csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "ratio,k,strategy,auc_pr,auc_roc,vus_pr,vus_roc\n";
    for (const Cell& c : cells) out << c.row << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

void cmd_loo(const RunConfig& rc, bool compare_baseline) {
    require_out(rc);
    Corpus corpus = load_data(rc);
    const int D = corpus.domains.size();
    if (D < 2) throw std::invalid_argument("loo: need at least 2 domains");
    write_resolved_config(rc, rc.out_dir);

    auto run_folds = [&](MemoryStrategy strategy) {
        // every series is held out exactly once, so rows cover the corpus
        std::vector<SeriesMetrics> all(corpus.records.size());
        parallel_cells(D, [&](int held) {
            std::vector<SeriesRecord> train_set;
            Corpus eval_set;
            std::vector<int> corpus_index;
            for (size_t i = 0; i < corpus.records.size(); ++i) {
                if (corpus.domain_of[i] == held) {
                    eval_set.records.push_back(corpus.records[i]);
                    corpus_index.push_back(static_cast<int>(i));
                } else {
                    train_set.push_back(corpus.records[i]);
                }
            }
            eval_set.domains.add(eval_set.records[0].dataset, eval_set.records[0].subdomain);
            eval_set.domain_of.assign(eval_set.records.size(), 0);

            TrainConfig cfg = rc.train;
            cfg.mode = TrainMode::multi_domain;
            cfg.model.strategy = strategy;
            TrainResult tr = train(train_set, cfg);
            CorpusEval ev = evaluate_corpus(tr.model, eval_set, rc.metrics);
            for (size_t k = 0; k < ev.report.series.size(); ++k) {
                SeriesMetrics m = ev.report.series[k];
                m.series_id = corpus_index[k];
                all[corpus_index[k]] = std::move(m);
            }
        });
        return aggregate(all, corpus.domains);
    };

    write_report_csv(run_folds(rc.train.model.strategy),
                     joined(rc.out_dir, "loo_report.csv"));
    if (compare_baseline)
        write_report_csv(run_folds(MemoryStrategy::none),
                         joined(rc.out_dir, "loo_baseline_report.csv"));
}

void cmd_bench(const RunConfig& rc) {
    require_out(rc);
    Corpus corpus = load_data(rc);
    write_resolved_config(rc, rc.out_dir);
    std::vector<BenchRow> rows =
        efficiency_report(corpus.records, rc.train, joined(rc.out_dir, "bench_work"));
    write_bench_csv(rows, joined(rc.out_dir, "bench.csv"));
}

}  // namespace pmad
