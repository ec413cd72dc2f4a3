#include "train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <stdexcept>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "eval.hpp"
#include "rng.hpp"

namespace pmad {

std::string to_string(TrainMode m) {
    return m == TrainMode::multi_domain ? "multi_domain" : "per_dataset";
}

TrainMode mode_from_string(const std::string& s) {
    if (s == "multi_domain") return TrainMode::multi_domain;
    if (s == "per_dataset") return TrainMode::per_dataset;
    throw std::invalid_argument("unknown train mode: " + s);
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (!(train_ratio > 0.0 && train_ratio <= 1.0))
        throw std::invalid_argument("config: train_ratio must lie in (0, 1]");
    if (mem_samples < 1) throw std::invalid_argument("config: mem_samples must be >= 1");
    model.validate();
}

Adam::Adam(size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::vector<double>& params, const std::vector<double>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw std::invalid_argument("Adam: size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (size_t i = 0; i < params.size(); ++i) {
        m_[i] = b1_ * m_[i] + (1.0 - b1_) * grads[i];
        v_[i] = b2_ * v_[i] + (1.0 - b2_) * grads[i] * grads[i];
        params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
}

std::vector<SeriesRecord> few_shot_subsample(const std::vector<SeriesRecord>& corpus,
                                             double ratio, uint64_t seed) {
    (void)seed;  // prefix truncation is deterministic by itself
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw std::invalid_argument("few_shot_subsample: ratio must lie in (0, 1]");
    std::vector<SeriesRecord> out = corpus;
    for (SeriesRecord& rec : out)
        rec.train_used = std::min(
            rec.train_len, static_cast<int>(std::ceil(ratio * static_cast<double>(rec.train_len))));
    return out;
}

namespace {

struct TrainWindow {
    PatchedWindow pw;
    int domain = -1;
};

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

bool encoder_tensor(const std::string& name) {
    return name.rfind("embed.", 0) == 0 || name == "pos" || name.rfind("enc", 0) == 0;
}

void quantize_f32(Matrix& m) {
    for (double& v : m.data) v = static_cast<double>(static_cast<float>(v));
}

void tune_allocator() {
#ifdef __GLIBC__
    // batch activations sit near glibc's default mmap and trim thresholds;
    // without this every tape allocation cycle becomes an mmap/munmap or
    // heap-trim pair, and the kernel re-faults the pages each batch
    static std::once_flag once;
    std::call_once(once, [] {
        mallopt(M_MMAP_THRESHOLD, 64 << 20);
        mallopt(M_TRIM_THRESHOLD, 64 << 20);
    });
#endif
}

}  // namespace

TrainResult train(const std::vector<SeriesRecord>& corpus_in, const TrainConfig& cfg) {
    tune_allocator();
    cfg.validate();
    if (corpus_in.empty()) throw std::invalid_argument("train: empty corpus");
    if (cfg.mode == TrainMode::per_dataset && corpus_in.size() != 1)
        throw std::invalid_argument("train: per_dataset mode takes exactly one series");

    const std::vector<SeriesRecord> corpus =
        few_shot_subsample(corpus_in, cfg.train_ratio, cfg.seed);
    DomainIndex domains = build_domain_index(corpus);
    const int D = domains.size();
    const ModelConfig& mc = cfg.model;
    const int M = mc.mem_items > 0 ? mc.mem_items : D;
    if (mc.has_memory() && mc.mem.topk > M)
        throw std::invalid_argument("train: K=" + std::to_string(mc.mem.topk) +
                                    " exceeds item count M=" + std::to_string(M));

    Model model = build_model(mc, cfg.seed);
    model.domains = domains;
    if (!cfg.encoder_init.empty()) {
        Model pre = load_checkpoint(cfg.encoder_init);
        for (auto& [name, m] : model.params.items()) {
            if (!encoder_tensor(name)) continue;
            if (!pre.params.has(name))
                throw std::runtime_error("encoder_init: tensor missing from checkpoint: " + name);
            const Matrix& src = pre.params.get(name);
            if (src.rows != m.rows || src.cols != m.cols)
                throw std::runtime_error("encoder_init: shape mismatch for " + name);
            m = src;
        }
    }

    std::vector<TrainWindow> pool;
    for (size_t i = 0; i < corpus.size(); ++i) {
        const SeriesRecord& rec = corpus[i];
        const int dom = domains.id_of(rec.dataset, rec.subdomain);
        for (const RawWindow& w : window_range(0, rec.train_used, mc.window, mc.patch_len))
            pool.push_back(
                {patch_window(rec, static_cast<int>(i), w, mc.patch_len, mc.max_patches, mc.eps),
                 dom});
    }
    if (pool.empty())
        throw std::runtime_error("train: no training windows (splits shorter than one patch)");

    if (mc.has_memory()) {
        // seed the bank from the current encoder, before any optimization
        std::vector<std::vector<std::pair<Matrix, int>>> reps(M);
        std::vector<int> item_domain(M);
        for (int j = 0; j < M; ++j) item_domain[j] = j % D;
        for (const TrainWindow& tw : pool) {
            Tape t;
            TapeParams tp = stage_params(t, model.params, /*trainable=*/false);
            Matrix q = t.value(encode_tape(t, tp, mc, tw.pw));
            for (int j = 0; j < M; ++j)
                if (item_domain[j] == tw.domain) reps[j].emplace_back(q, tw.pw.observed);
        }
        model.bank = init_memory(reps, item_domain, mc.max_patches, mc.d_model, cfg.mem_samples,
                                 cfg.seed, mc.mem.eps);
    }

    TrainResult result;
    if (mc.has_memory()) result.utilization = Matrix(D, M);
    for (const SeriesRecord& rec : corpus) result.effective_train_len.push_back(rec.train_used);

    ParamVector pv = model.params.flatten();
    Adam adam(pv.values.size(), cfg.lr);
    const bool writes_back =
        mc.strategy == MemoryStrategy::data_driven || mc.strategy == MemoryStrategy::own_domain;

    int step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<size_t> order(pool.size());
        std::iota(order.begin(), order.end(), 0);
        Rng(derive_seed(cfg.seed, "order/" + std::to_string(epoch))).shuffle(order);

        for (size_t b0 = 0; b0 < order.size(); b0 += static_cast<size_t>(cfg.batch_size)) {
            const auto t0 = std::chrono::steady_clock::now();
            const size_t b1 = std::min(order.size(), b0 + static_cast<size_t>(cfg.batch_size));

            Tape t;
            TapeParams tp = stage_params(t, model.params, /*trainable=*/true);
            WriteBackAccum wb(mc.has_memory() ? M : 0, mc.max_patches, mc.d_model);
            Tape::Id total = -1;
            for (size_t bi = b0; bi < b1; ++bi) {
                const TrainWindow& tw = pool[order[bi]];
                const int forced =
                    mc.has_memory() ? resolve_forced_item(mc, model.bank, tw.domain) : -1;
                ForwardResult fr = model_forward(t, tp, mc, model.bank, tw.pw, forced);
                total = (bi == b0) ? fr.loss : t.add(total, fr.loss);
                if (mc.has_memory()) {
                    accumulate_utilization(result.utilization, tw.domain, fr.selection);
                    if (writes_back)
                        for (size_t si = 0; si < fr.selection.indices.size(); ++si)
                            wb.add(fr.selection.indices[si], fr.m_tilde[si]);
                }
            }
            Tape::Id loss = t.scale(total, 1.0 / static_cast<double>(b1 - b0));
            const double loss_val = t.value(loss).at(0, 0);
            ++step;
            if (!std::isfinite(loss_val))
                throw std::runtime_error("train: diverged at step " + std::to_string(step));

            t.backward(loss);
            std::vector<double> g;
            g.reserve(pv.values.size());
            for (const auto& [name, id] : tp.ids) {
                const Matrix& gm = t.grad(id);
                g.insert(g.end(), gm.data.begin(), gm.data.end());
            }
            adam.step(pv.values, g);
            model.params.assign(pv.values);
            if (!wb.empty()) wb.apply(model.bank, mc.mem.eps);

            result.log.push_back({step, epoch, loss_val, ms_since(t0)});
        }
    }

    // land every tensor on the f32 grid so persisted and in-memory models
    // produce identical forwards
    for (auto& [name, m] : model.params.items()) quantize_f32(m);
    for (Matrix& item : model.bank.items) quantize_f32(item);

    result.model = std::move(model);
    return result;
}

void write_train_log(const std::vector<TrainStep>& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "step,epoch,loss,wall_ms\n";
    char buf[96];
    for (const TrainStep& s : log) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.3f\n", s.step, s.epoch, s.loss, s.wall_ms);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

// --- checkpoint io ----------------------------------------------------------

namespace {

constexpr uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& o, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    o.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& o, uint64_t v) {
    put_u32(o, static_cast<uint32_t>(v));
    put_u32(o, static_cast<uint32_t>(v >> 32));
}

void put_f32(std::ostream& o, double v) {
    const float f = static_cast<float>(v);
    uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(o, u);
}

void put_f64(std::ostream& o, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(o, u);
}

void put_str(std::ostream& o, const std::string& s) {
    put_u32(o, static_cast<uint32_t>(s.size()));
    o.write(s.data(), static_cast<std::streamsize>(s.size()));
}

[[noreturn]] void load_fail(const std::string& why) {
    throw std::runtime_error("load_checkpoint: " + why);
}

uint32_t get_u32(std::istream& i) {
    unsigned char b[4];
    i.read(reinterpret_cast<char*>(b), 4);
    if (!i) load_fail("truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t get_u64(std::istream& i) {
    const uint64_t lo = get_u32(i);
    const uint64_t hi = get_u32(i);
    return lo | (hi << 32);
}

double get_f32(std::istream& i) {
    const uint32_t u = get_u32(i);
    float f;
    std::memcpy(&f, &u, 4);
    return static_cast<double>(f);
}

double get_f64(std::istream& i) {
    const uint64_t u = get_u64(i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

std::string get_str(std::istream& i) {
    const uint32_t n = get_u32(i);
    if (n > (1u << 20)) load_fail("implausible string length");
    std::string s(n, '\0');
    i.read(s.data(), n);
    if (!i) load_fail("truncated file");
    return s;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write("PMAD", 4);
    put_u32(out, kCheckpointVersion);

    const ModelConfig& c = model.cfg;
    for (int v : {c.window, c.patch_len, c.max_patches, c.d_model, c.d_ff, c.n_layers, c.n_heads,
                  c.d_hidden, c.mem_items})
        put_u32(out, static_cast<uint32_t>(v));
    put_u32(out, static_cast<uint32_t>(c.strategy));
    put_u32(out, static_cast<uint32_t>(c.mem.topk));
    put_f64(out, c.mem.tau_select);
    put_f64(out, c.mem.tau_attn);
    put_u32(out, c.mem.renormalize_topk ? 1 : 0);
    put_f64(out, c.mem.eps);
    put_f64(out, c.eps);

    put_u32(out, static_cast<uint32_t>(model.domains.size()));
    for (const auto& [ds, sd] : model.domains.labels()) {
        put_str(out, ds);
        put_str(out, sd);
    }

    put_u32(out, static_cast<uint32_t>(model.params.count()));
    for (const auto& [name, m] : model.params.items()) {
        put_str(out, name);
        put_u32(out, static_cast<uint32_t>(m.rows));
        put_u32(out, static_cast<uint32_t>(m.cols));
        for (double v : m.data) put_f32(out, v);
    }

    put_u32(out, static_cast<uint32_t>(model.bank.M));
    if (model.bank.M > 0) {
        put_u32(out, static_cast<uint32_t>(model.bank.N));
        put_u32(out, static_cast<uint32_t>(model.bank.d));
        for (int d : model.bank.init_domain) put_u32(out, static_cast<uint32_t>(d));
        for (const Matrix& item : model.bank.items)
            for (double v : item.data) put_f32(out, v);
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) load_fail("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "PMAD", 4) != 0) load_fail("bad magic in " + path);
    const uint32_t version = get_u32(in);
    if (version != kCheckpointVersion)
        load_fail("unsupported version " + std::to_string(version) + " in " + path);

    ModelConfig c;
    c.window = static_cast<int>(get_u32(in));
    c.patch_len = static_cast<int>(get_u32(in));
    c.max_patches = static_cast<int>(get_u32(in));
    c.d_model = static_cast<int>(get_u32(in));
    c.d_ff = static_cast<int>(get_u32(in));
    c.n_layers = static_cast<int>(get_u32(in));
    c.n_heads = static_cast<int>(get_u32(in));
    c.d_hidden = static_cast<int>(get_u32(in));
    c.mem_items = static_cast<int>(get_u32(in));
    const uint32_t strat = get_u32(in);
    if (strat > 3) load_fail("bad strategy tag");
    c.strategy = static_cast<MemoryStrategy>(strat);
    c.mem.topk = static_cast<int>(get_u32(in));
    c.mem.tau_select = get_f64(in);
    c.mem.tau_attn = get_f64(in);
    c.mem.renormalize_topk = get_u32(in) != 0;
    c.mem.eps = get_f64(in);
    c.eps = get_f64(in);

    Model model = build_model(c, 0);  // canonical tensor set; values overwritten
    const uint32_t n_domains = get_u32(in);
    for (uint32_t i = 0; i < n_domains; ++i) {
        const std::string ds = get_str(in);
        const std::string sd = get_str(in);
        model.domains.add(ds, sd);
    }

    const uint32_t n_params = get_u32(in);
    if (n_params != model.params.count()) load_fail("parameter count mismatch vs config");
    for (auto& [name, m] : model.params.items()) {
        const std::string stored = get_str(in);
        if (stored != name) load_fail("unexpected tensor \"" + stored + "\", wanted \"" + name +
                                      "\"");
        const int rows = static_cast<int>(get_u32(in));
        const int cols = static_cast<int>(get_u32(in));
        if (rows != m.rows || cols != m.cols) load_fail("shape mismatch for " + name);
        for (double& v : m.data) v = get_f32(in);
    }

    const uint32_t M = get_u32(in);
    if (M > 0) {
        model.bank.M = static_cast<int>(M);
        model.bank.N = static_cast<int>(get_u32(in));
        model.bank.d = static_cast<int>(get_u32(in));
        if (model.bank.N != c.max_patches || model.bank.d != c.d_model)
            load_fail("bank shape mismatch vs config");
        model.bank.init_domain.resize(M);
        for (uint32_t j = 0; j < M; ++j)
            model.bank.init_domain[j] = static_cast<int>(get_u32(in));
        for (uint32_t j = 0; j < M; ++j) {
            Matrix item(model.bank.N, model.bank.d);
            for (double& v : item.data) v = get_f32(in);
            model.bank.items.push_back(std::move(item));
        }
    }
    in.peek();
    if (!in.eof()) load_fail("trailing bytes in " + path);
    return model;
}

// --- efficiency bench -------------------------------------------------------

namespace {

Corpus as_corpus(const std::vector<SeriesRecord>& records) {
    Corpus c;
    c.records = records;
    c.domains = build_domain_index(records);
    for (const SeriesRecord& r : records)
        c.domain_of.push_back(c.domains.id_of(r.dataset, r.subdomain));
    return c;
}

long long file_size(const std::string& path) {
    return static_cast<long long>(std::filesystem::file_size(path));
}

}  // namespace

std::vector<BenchRow> efficiency_report(const std::vector<SeriesRecord>& corpus,
                                        const TrainConfig& base, const std::string& work_dir) {
    if (corpus.size() < 2)
        throw std::invalid_argument("efficiency_report: need at least 2 series");
    std::filesystem::create_directories(work_dir);
    const Corpus full = as_corpus(corpus);
    const int M_md =
        base.model.mem_items > 0 ? base.model.mem_items : full.domains.size();

    {
        // untimed warmup: the first training run in a process pays page-fault
        // and allocator-growth costs that would skew the first row
        TrainConfig warm = base;
        warm.mode = TrainMode::multi_domain;
        warm.epochs = 1;
        train(corpus, warm);
    }

    std::vector<BenchRow> rows;
    for (const bool multi : {true, false}) {
        for (const bool memory : {true, false}) {
            BenchRow row;
            row.name = std::string(multi ? "multi_domain" : "per_dataset") +
                       (memory ? "_memory" : "_no_memory");

            TrainConfig cfg = base;
            cfg.model.strategy =
                memory ? MemoryStrategy::data_driven : MemoryStrategy::none;

            std::vector<std::string> paths;
            if (multi) {
                cfg.mode = TrainMode::multi_domain;
                const auto t0 = std::chrono::steady_clock::now();
                TrainResult tr = train(corpus, cfg);
                row.train_ms = ms_since(t0);
                const std::string p =
                    (std::filesystem::path(work_dir) / (row.name + ".ckpt")).string();
                save_checkpoint(tr.model, p);
                paths.push_back(p);

                const auto t1 = std::chrono::steady_clock::now();
                Model loaded = load_checkpoint(p);
                row.switch_ms = ms_since(t1);
                const auto t2 = std::chrono::steady_clock::now();
                for (size_t i = 0; i < full.records.size(); ++i)
                    score_series(loaded, full.records[i],
                                 loaded.domains.id_of(full.records[i].dataset,
                                                      full.records[i].subdomain));
                row.infer_ms = ms_since(t2);
            } else {
                cfg.mode = TrainMode::per_dataset;
                // identical architecture: per-dataset banks carry the
                // multi-domain item count
                if (memory) cfg.model.mem_items = M_md;
                for (size_t i = 0; i < corpus.size(); ++i) {
                    const std::vector<SeriesRecord> one(1, corpus[i]);
                    const auto t0 = std::chrono::steady_clock::now();
                    TrainResult tr = train(one, cfg);
                    row.train_ms += ms_since(t0);
                    const std::string p =
                        (std::filesystem::path(work_dir) /
                         (row.name + "_" + std::to_string(i) + ".ckpt"))
                            .string();
                    save_checkpoint(tr.model, p);
                    paths.push_back(p);
                }
                // a full corpus pass reloads the matching model per series
                for (size_t i = 0; i < corpus.size(); ++i) {
                    const auto t1 = std::chrono::steady_clock::now();
                    Model loaded = load_checkpoint(paths[i]);
                    row.switch_ms += ms_since(t1);
                    const auto t2 = std::chrono::steady_clock::now();
                    score_series(loaded, corpus[i],
                                 loaded.domains.id_of(corpus[i].dataset, corpus[i].subdomain));
                    row.infer_ms += ms_since(t2);
                }
            }
            row.checkpoints = static_cast<int>(paths.size());
            for (const std::string& p : paths) row.size_bytes += file_size(p);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "config,checkpoints,train_ms,switch_ms,infer_ms,size_bytes\n";
    char buf[160];
    for (const BenchRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.3f,%.3f,%.3f,%lld\n", r.name.c_str(),
                      r.checkpoints, r.train_ms, r.switch_ms, r.infer_ms, r.size_bytes);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace pmad
