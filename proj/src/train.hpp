#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data.hpp"
#include "matrix.hpp"
#include "model.hpp"

namespace pmad {

enum class TrainMode { multi_domain, per_dataset };
std::string to_string(TrainMode m);
TrainMode mode_from_string(const std::string& s);

struct TrainConfig {
    TrainMode mode = TrainMode::multi_domain;
    double lr = 1e-4;
    int epochs = 2;
    int batch_size = 8;
    uint64_t seed = 42;
    double train_ratio = 1.0;   // few-shot prefix fraction of each train split
    std::string encoder_init;   // checkpoint path; empty = scratch
    int mem_samples = 8;        // S representations per item at init
    ModelConfig model;

    void validate() const;
};

// Flat-vector Adam; state layout follows ParamStore registration order.
class Adam {
public:
    Adam(size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(std::vector<double>& params, const std::vector<double>& grads);
    int steps_taken() const { return t_; }

private:
    double lr_, b1_, b2_, eps_;
    int t_ = 0;
    std::vector<double> m_, v_;
};

struct TrainStep {
    int step = 0;   // 1-based global optimizer step
    int epoch = 0;  // 1-based
    double loss = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<TrainStep> log;
    std::vector<int> effective_train_len;  // per series, after train_ratio
    Matrix utilization;                    // domains x M accumulated over training
};

// Per-series prefix truncation to ceil(ratio * train_len) training points.
// Deterministic; the seed parameter is part of the call contract but unused.
std::vector<SeriesRecord> few_shot_subsample(const std::vector<SeriesRecord>& corpus,
                                             double ratio, uint64_t seed);

TrainResult train(const std::vector<SeriesRecord>& corpus, const TrainConfig& cfg);

void write_train_log(const std::vector<TrainStep>& log, const std::string& path);

// Versioned binary checkpoint: config echo, domain labels, every parameter
// tensor and the memory bank as little-endian f32, row-major. Parameters are
// quantized to the f32 grid at the end of training, so save -> load -> forward
// reproduces in-memory results bit for bit.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

struct BenchRow {
    std::string name;           // configuration label
    int checkpoints = 0;        // models written
    double train_ms = 0.0;      // total training wall time
    double switch_ms = 0.0;     // checkpoint (re)load time over a full pass
    double infer_ms = 0.0;      // scoring time over the corpus
    long long size_bytes = 0;   // on-disk size of all checkpoints
};

// {multi-domain, per-dataset} x {memory, none}. Trains every configuration
// on the corpus, writes checkpoints under work_dir, measures by re-loading
// them for scoring. Per-dataset memory models share the multi-domain item
// count so architectures stay identical.
std::vector<BenchRow> efficiency_report(const std::vector<SeriesRecord>& corpus,
                                        const TrainConfig& base, const std::string& work_dir);

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path);

}  // namespace pmad
