#include "pmad.h"

#include <cstring>
#include <new>
#include <stdexcept>
#include <string>

#include "eval.hpp"
#include "harness.hpp"
#include "train.hpp"

using namespace pmad;

namespace {

thread_local std::string g_last_error;

int fail(int code, const char* what) {
    g_last_error = what ? what : "unknown error";
    return code;
}

// Exceptions from argument/config validation carry std::invalid_argument;
// everything else (I/O, divergence, bugs) maps to the runtime code.
template <typename F>
int guarded(F f) {
    try {
        f();
        return PMAD_OK;
    } catch (const std::invalid_argument& e) {
        return fail(PMAD_ERR_INVALID, e.what());
    } catch (const std::exception& e) {
        return fail(PMAD_ERR_RUNTIME, e.what());
    } catch (...) {
        return fail(PMAD_ERR_RUNTIME, "unknown error");
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(::operator new(s.size() + 1, std::nothrow));
    if (!out) return nullptr;
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::vector<std::string> to_strings(const char* const* items, size_t n) {
    std::vector<std::string> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        if (!items[i]) throw std::invalid_argument("null string in list");
        out.emplace_back(items[i]);
    }
    return out;
}

}  // namespace

struct pmad_config {
    RunConfig rc;
};

struct pmad_model {
    Model model;
};

extern "C" {

const char* pmad_last_error(void) { return g_last_error.c_str(); }

const char* pmad_version(void) { return "1.0.0"; }

pmad_config* pmad_config_new(void) { return new (std::nothrow) pmad_config(); }

void pmad_config_free(pmad_config* cfg) { delete cfg; }

int pmad_config_load_file(pmad_config* cfg, const char* path) {
    if (!cfg || !path) return fail(PMAD_ERR_INVALID, "null argument");
    return guarded([&] {
        RunConfig next = cfg->rc;  // commit only if every line applies
        for (const auto& [key, value] : parse_config_file(path)) apply_kv(next, key, value);
        cfg->rc = std::move(next);
    });
}

int pmad_config_set(pmad_config* cfg, const char* key, const char* value) {
    if (!cfg || !key || !value) return fail(PMAD_ERR_INVALID, "null argument");
    return guarded([&] { apply_kv(cfg->rc, key, value); });
}

char* pmad_config_render(const pmad_config* cfg) {
    if (!cfg) {
        fail(PMAD_ERR_INVALID, "null argument");
        return nullptr;
    }
    return dup_string(render_config(cfg->rc));
}

void pmad_string_free(char* s) { ::operator delete(s); }

int pmad_run_synth(uint64_t seed, const char* out_dir) {
    if (!out_dir) return fail(PMAD_ERR_INVALID, "null argument");
    return guarded([&] { cmd_synth(seed, out_dir); });
}

int pmad_run_train(const pmad_config* cfg) {
    if (!cfg) return fail(PMAD_ERR_INVALID, "null argument");
    return guarded([&] { cmd_train(cfg->rc); });
}

int pmad_run_eval(const pmad_config* cfg, const char* checkpoint) {
    if (!cfg || !checkpoint) return fail(PMAD_ERR_INVALID, "null argument");
    return guarded([&] { cmd_eval(cfg->rc, checkpoint); });
}

int pmad_run_ablate(const pmad_config* cfg, const char* const* encoders, size_t n_encoders,
                    const char* const* strategies, size_t n_strategies) {
    if (!cfg || (!encoders && n_encoders) || (!strategies && n_strategies))
        return fail(PMAD_ERR_INVALID, "null argument");
    return guarded([&] {
        cmd_ablate(cfg->rc, to_strings(encoders, n_encoders),
                   to_strings(strategies, n_strategies));
    });
}

int pmad_run_sweep(const pmad_config* cfg, const double* ratios, size_t n_ratios,
                   const int* k_values, size_t n_k, const char* const* strategies,
                   size_t n_strategies) {
    if (!cfg || (!ratios && n_ratios) || (!k_values && n_k) || (!strategies && n_strategies))
        return fail(PMAD_ERR_INVALID, "null argument");
    return guarded([&] {
        cmd_sweep(cfg->rc, std::vector<double>(ratios, ratios + n_ratios),
                  std::vector<int>(k_values, k_values + n_k),
                  to_strings(strategies, n_strategies));
    });
}

int pmad_run_loo(const pmad_config* cfg, int compare_baseline) {
    if (!cfg) return fail(PMAD_ERR_INVALID, "null argument");
    return guarded([&] { cmd_loo(cfg->rc, compare_baseline != 0); });
}

int pmad_run_bench(const pmad_config* cfg) {
    if (!cfg) return fail(PMAD_ERR_INVALID, "null argument");
    return guarded([&] { cmd_bench(cfg->rc); });
}

pmad_model* pmad_model_load(const char* checkpoint) {
    if (!checkpoint) {
        fail(PMAD_ERR_INVALID, "null argument");
        return nullptr;
    }
    pmad_model* handle = nullptr;
    const int rc = guarded([&] {
        auto* h = new pmad_model{load_checkpoint(checkpoint)};
        handle = h;
    });
    return rc == PMAD_OK ? handle : nullptr;
}

void pmad_model_free(pmad_model* model) { delete model; }

int pmad_model_window(const pmad_model* model) { return model ? model->model.cfg.window : -1; }

int pmad_model_patch_len(const pmad_model* model) {
    return model ? model->model.cfg.patch_len : -1;
}

int pmad_model_mem_items(const pmad_model* model) {
    return model ? model->model.bank.M : -1;
}

int pmad_model_domain_count(const pmad_model* model) {
    return model ? model->model.domains.size() : -1;
}

char* pmad_model_domain_label(const pmad_model* model, int id) {
    if (!model || id < 0 || id >= model->model.domains.size()) {
        fail(PMAD_ERR_INVALID, "domain id out of range");
        return nullptr;
    }
    return dup_string(model->model.domains.label(id));
}

int pmad_model_score(const pmad_model* model, const char* dataset, const char* subdomain,
                     const double* values, size_t n, double* scores, int* excluded) {
    if (!model || !values || !scores) return fail(PMAD_ERR_INVALID, "null argument");
    return guarded([&] {
        SeriesRecord rec;
        rec.values.assign(values, values + n);
        rec.labels.assign(n, 0);
        rec.dataset = dataset ? dataset : "";
        rec.subdomain = subdomain ? subdomain : "";
        rec.train_len = 0;  // score the full array as one test region
        rec.train_used = 0;
        const int bank_domain =
            (dataset && subdomain) ? model->model.domains.id_of(rec.dataset, rec.subdomain) : -1;
        SeriesScores ss = score_series(model->model, rec, bank_domain);
        for (size_t i = 0; i < n; ++i) {
            scores[i] = ss.scored.scores[i];
            if (excluded) excluded[i] = ss.scored.excluded[i];
        }
    });
}

}  // extern "C"
