#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "eval.hpp"
#include "train.hpp"

namespace pmad {

// Fully resolved run settings: every TrainConfig field plus data location
// and metric options. explicit_keys tracks what the user actually set, so
// conflicts with a loaded checkpoint can be detected.
struct RunConfig {
    std::string data_dir;
    std::string out_dir;
    TrainConfig train;
    MetricOptions metrics;
    std::set<std::string> explicit_keys;
};

// Applies one `key = value` pair; unknown keys and malformed values throw.
void apply_kv(RunConfig& rc, const std::string& key, const std::string& value);

// Plain-text config: one `key = value` per line, '#' starts a comment.
// parse_config_file returns the raw pairs in file order (syntax checks
// only); load_config_file also applies them to a default RunConfig.
std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& path);
RunConfig load_config_file(const std::string& path);

// Command-line overrides, applied after the file (flags win).
void merge_overrides(RunConfig& rc, const std::vector<std::pair<std::string, std::string>>& kv);

// Canonical echo of every setting; parseable by load_config_file.
std::string render_config(const RunConfig& rc);
void write_resolved_config(const RunConfig& rc, const std::string& dir);

// PMAD_THREADS, default 1; grid cells of ablate/sweep/loo fan out this wide.
int thread_budget();

void cmd_synth(uint64_t seed, const std::string& out_dir);
void cmd_train(const RunConfig& rc);
void cmd_eval(const RunConfig& rc, const std::string& checkpoint);
// encoders ⊆ {scratch, pretrained}; strategies by name. One row per cell.
void cmd_ablate(const RunConfig& rc, const std::vector<std::string>& encoders,
                const std::vector<std::string>& strategies);
void cmd_sweep(const RunConfig& rc, std::vector<double> ratios,
               const std::vector<int>& k_values, const std::vector<std::string>& strategies);
void cmd_loo(const RunConfig& rc, bool compare_baseline);
void cmd_bench(const RunConfig& rc);

}  // namespace pmad
