// pmad command-line tool. All work happens behind the C API in libpmad;
// this file only parses flags and maps status codes to exit codes
// (0 success, 1 user/config error, 2 runtime failure).
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "pmad.h"

namespace {

struct ConfigHandle {
    pmad_config* c;
    ConfigHandle() : c(pmad_config_new()) {}
    ~ConfigHandle() { pmad_config_free(c); }
    ConfigHandle(const ConfigHandle&) = delete;
    ConfigHandle& operator=(const ConfigHandle&) = delete;
};

int report_failure(int rc) {
    if (rc != PMAD_OK) std::fprintf(stderr, "error: %s\n", pmad_last_error());
    return rc;
}

// option storage shared by every run subcommand; empty string = not given
struct RunOpts {
    std::string config;
    std::string data;
    std::string out;
    std::string seed;
    std::string mode;
    std::string strategy;
    std::string ratio;
    std::string lr;
    std::string epochs;
    std::string batch_size;
    std::string encoder_init;
    std::string ell_max;
    std::string buffer_shape;
    std::vector<std::string> sets;
};

void add_run_options(CLI::App* cmd, RunOpts& o) {
    cmd->add_option("--config", o.config, "key = value config file ('#' comments)");
    cmd->add_option("--data", o.data, "corpus directory of labeled CSVs");
    cmd->add_option("--out", o.out, "output directory for artifacts");
    cmd->add_option("--seed", o.seed, "run seed");
    cmd->add_option("--mode", o.mode, "multi_domain | per_dataset");
    cmd->add_option("--strategy", o.strategy, "none | frozen | own_domain | data_driven");
    cmd->add_option("--ratio", o.ratio, "training-prefix ratio in (0, 1]");
    cmd->add_option("--lr", o.lr, "learning rate");
    cmd->add_option("--epochs", o.epochs, "training epochs");
    cmd->add_option("--batch-size", o.batch_size, "windows per optimizer step");
    cmd->add_option("--encoder-init", o.encoder_init, "checkpoint to copy encoder weights from");
    cmd->add_option("--ell-max", o.ell_max, "VUS buffer upper bound (-1 = per-series default)");
    cmd->add_option("--buffer-shape", o.buffer_shape, "linear | sqrt");
    cmd->add_option("--set", o.sets, "extra key=value override, repeatable; wins over flags")
        ->expected(-1);
}

// file first, then named flags, then --set pairs: later assignments win
int fill_config(pmad_config* c, const RunOpts& o) {
    if (!o.config.empty()) {
        const int rc = pmad_config_load_file(c, o.config.c_str());
        if (rc != PMAD_OK) return report_failure(rc);
    }
    const std::pair<const char*, const std::string*> named[] = {
        {"data", &o.data},           {"out", &o.out},
        {"seed", &o.seed},           {"mode", &o.mode},
        {"strategy", &o.strategy},   {"ratio", &o.ratio},
        {"lr", &o.lr},               {"epochs", &o.epochs},
        {"batch_size", &o.batch_size}, {"encoder_init", &o.encoder_init},
        {"ell_max", &o.ell_max},     {"buffer_shape", &o.buffer_shape},
    };
    for (const auto& [key, value] : named) {
        if (value->empty()) continue;
        const int rc = pmad_config_set(c, key, value->c_str());
        if (rc != PMAD_OK) return report_failure(rc);
    }
    for (const std::string& kv : o.sets) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "error: --set expects key=value, got \"%s\"\n", kv.c_str());
            return PMAD_ERR_INVALID;
        }
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        const int rc = pmad_config_set(c, key.c_str(), value.c_str());
        if (rc != PMAD_OK) return report_failure(rc);
    }
    return PMAD_OK;
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    size_t begin = 0;
    while (begin <= csv.size()) {
        const size_t comma = csv.find(',', begin);
        const size_t end = comma == std::string::npos ? csv.size() : comma;
        if (end > begin) out.push_back(csv.substr(begin, end - begin));
        if (comma == std::string::npos) break;
        begin = comma + 1;
    }
    return out;
}

std::vector<const char*> c_list(const std::vector<std::string>& items) {
    std::vector<const char*> out;
    out.reserve(items.size());
    for (const std::string& s : items) out.push_back(s.c_str());
    return out;
}

bool parse_doubles(const std::string& csv, std::vector<double>& out) {
    for (const std::string& tok : split_list(csv)) {
        size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &pos);
        } catch (const std::exception&) {
            return false;
        }
        if (pos != tok.size()) return false;
        out.push_back(v);
    }
    return !out.empty();
}

bool parse_ints(const std::string& csv, std::vector<int>& out) {
    for (const std::string& tok : split_list(csv)) {
        size_t pos = 0;
        int v = 0;
        try {
            v = std::stoi(tok, &pos);
        } catch (const std::exception&) {
            return false;
        }
        if (pos != tok.size()) return false;
        out.push_back(v);
    }
    return !out.empty();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"patch-memory anomaly detection for univariate time series"};
    app.require_subcommand(1);
    app.set_version_flag("--version", pmad_version());

    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic 3-domain corpus");
    uint64_t synth_seed = 42;
    std::string synth_out;
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--out", synth_out, "output directory")->required();

    RunOpts train_opts;
    CLI::App* train = app.add_subcommand("train", "fit a model and write a checkpoint");
    add_run_options(train, train_opts);

    RunOpts eval_opts;
    std::string eval_ckpt;
    CLI::App* eval = app.add_subcommand("eval", "score a corpus with a checkpoint");
    add_run_options(eval, eval_opts);
    eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();

    RunOpts ablate_opts;
    std::string ablate_encoders = "scratch,pretrained";
    std::string ablate_strategies = "none,data_driven";
    CLI::App* ablate = app.add_subcommand("ablate", "encoder x strategy grid table");
    add_run_options(ablate, ablate_opts);
    ablate->add_option("--encoders", ablate_encoders, "comma list: scratch, pretrained");
    ablate->add_option("--strategies", ablate_strategies, "comma list of memory strategies");

    RunOpts sweep_opts;
    std::string sweep_ratios, sweep_ks, sweep_strategies = "data_driven";
    CLI::App* sweep = app.add_subcommand("sweep", "training-ratio x K x strategy sweep");
    add_run_options(sweep, sweep_opts);
    sweep->add_option("--ratios", sweep_ratios, "comma list of ratios in (0, 1]")->required();
    sweep->add_option("--k-values", sweep_ks, "comma list of K values")->required();
    sweep->add_option("--strategies", sweep_strategies, "comma list of memory strategies");

    RunOpts loo_opts;
    bool loo_baseline = false;
    CLI::App* loo = app.add_subcommand("loo", "leave-one-domain-out evaluation");
    add_run_options(loo, loo_opts);
    loo->add_flag("--compare-baseline", loo_baseline, "also run the no-memory baseline");

    RunOpts bench_opts;
    CLI::App* bench = app.add_subcommand("bench", "training/switching/inference/size table");
    add_run_options(bench, bench_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (*synth) return report_failure(pmad_run_synth(synth_seed, synth_out.c_str()));

    const RunOpts& opts = *train ? train_opts
                        : *eval  ? eval_opts
                        : *ablate ? ablate_opts
                        : *sweep  ? sweep_opts
                        : *loo    ? loo_opts
                                  : bench_opts;
    ConfigHandle cfg;
    if (!cfg.c) {
        std::fprintf(stderr, "error: out of memory\n");
        return PMAD_ERR_RUNTIME;
    }
    if (const int rc = fill_config(cfg.c, opts); rc != PMAD_OK) return rc;

    if (*train) return report_failure(pmad_run_train(cfg.c));
    if (*eval) return report_failure(pmad_run_eval(cfg.c, eval_ckpt.c_str()));
    if (*ablate) {
        const std::vector<std::string> encoders = split_list(ablate_encoders);
        const std::vector<std::string> strategies = split_list(ablate_strategies);
        const std::vector<const char*> e = c_list(encoders), s = c_list(strategies);
        return report_failure(
            pmad_run_ablate(cfg.c, e.data(), e.size(), s.data(), s.size()));
    }
    if (*sweep) {
        std::vector<double> ratios;
        std::vector<int> ks;
        if (!parse_doubles(sweep_ratios, ratios)) {
            std::fprintf(stderr, "error: --ratios expects comma-separated numbers\n");
            return PMAD_ERR_INVALID;
        }
        if (!parse_ints(sweep_ks, ks)) {
            std::fprintf(stderr, "error: --k-values expects comma-separated integers\n");
            return PMAD_ERR_INVALID;
        }
        const std::vector<std::string> strategies = split_list(sweep_strategies);
        const std::vector<const char*> s = c_list(strategies);
        return report_failure(pmad_run_sweep(cfg.c, ratios.data(), ratios.size(), ks.data(),
                                             ks.size(), s.data(), s.size()));
    }
    if (*loo) return report_failure(pmad_run_loo(cfg.c, loo_baseline ? 1 : 0));
    return report_failure(pmad_run_bench(cfg.c));
}
