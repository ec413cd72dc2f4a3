// Exercises the shared library strictly through its C header.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pmad.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("pmad_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

struct ConfigHandle {
    pmad_config* c;
    ConfigHandle() : c(pmad_config_new()) { REQUIRE(c != nullptr); }
    ~ConfigHandle() { pmad_config_free(c); }
};

std::string rendered(const pmad_config* c) {
    char* s = pmad_config_render(c);
    REQUIRE(s != nullptr);
    std::string out(s);
    pmad_string_free(s);
    return out;
}

int count_csvs(const std::string& dir) {
    int n = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".csv") ++n;
    return n;
}

// small model + 1 epoch so the end-to-end path stays fast
void set_tiny(pmad_config* c) {
    const char* kv[][2] = {{"window", "64"},   {"patch_len", "8"}, {"max_patches", "8"},
                           {"d_model", "16"},  {"d_ff", "32"},     {"n_layers", "1"},
                           {"n_heads", "2"},   {"d_hidden", "32"}, {"epochs", "1"},
                           {"lr", "0.001"},    {"seed", "7"}};
    for (const auto& p : kv) REQUIRE(pmad_config_set(c, p[0], p[1]) == PMAD_OK);
}

}  // namespace

TEST_CASE("status codes double as exit codes") {
    CHECK(PMAD_OK == 0);
    CHECK(PMAD_ERR_INVALID == 1);
    CHECK(PMAD_ERR_RUNTIME == 2);
    CHECK(pmad_version() != nullptr);
    CHECK(pmad_last_error() != nullptr);
}

TEST_CASE("config handle: set, render, reject") {
    ConfigHandle h;
    CHECK(pmad_config_set(h.c, "lr", "0.5") == PMAD_OK);
    CHECK(pmad_config_set(h.c, "strategy", "frozen") == PMAD_OK);
    std::string text = rendered(h.c);
    CHECK(text.find("lr = 0.5\n") != std::string::npos);
    CHECK(text.find("strategy = frozen\n") != std::string::npos);

    CHECK(pmad_config_set(h.c, "warp_factor", "9") == PMAD_ERR_INVALID);
    CHECK(std::string(pmad_last_error()).find("warp_factor") != std::string::npos);
    CHECK(pmad_config_set(h.c, "epochs", "lots") == PMAD_ERR_INVALID);
    CHECK(rendered(h.c) == text);  // failed sets leave the config unchanged

    CHECK(pmad_config_set(nullptr, "lr", "0.5") == PMAD_ERR_INVALID);
    CHECK(pmad_config_set(h.c, nullptr, "0.5") == PMAD_ERR_INVALID);
    CHECK(pmad_config_set(h.c, "lr", nullptr) == PMAD_ERR_INVALID);
}

TEST_CASE("config handle: file merge semantics") {
    TempDir dir("capi_cfg");
    const std::string path = dir.sub("a.cfg");
    {
        std::ofstream out(path);
        out << "lr = 0.25\nepochs = 9 # comment\n";
    }
    ConfigHandle h;
    REQUIRE(pmad_config_set(h.c, "seed", "123") == PMAD_OK);
    REQUIRE(pmad_config_load_file(h.c, path.c_str()) == PMAD_OK);
    std::string text = rendered(h.c);
    CHECK(text.find("lr = 0.25\n") != std::string::npos);
    CHECK(text.find("epochs = 9\n") != std::string::npos);
    CHECK(text.find("seed = 123\n") != std::string::npos);  // earlier sets survive

    // a file that fails mid-parse must not partially apply
    const std::string bad = dir.sub("bad.cfg");
    {
        std::ofstream out(bad);
        out << "lr = 0.125\nbogus = 1\n";
    }
    CHECK(pmad_config_load_file(h.c, bad.c_str()) == PMAD_ERR_INVALID);
    CHECK(rendered(h.c) == text);
    CHECK(pmad_config_load_file(h.c, dir.sub("missing.cfg").c_str()) == PMAD_ERR_RUNTIME);
}

TEST_CASE("synth, train, eval, and model scoring through the C surface") {
    TempDir dir("capi_e2e");
    REQUIRE(pmad_run_synth(42, dir.sub("data").c_str()) == PMAD_OK);
    CHECK(count_csvs(dir.sub("data")) == 12);

    ConfigHandle train;
    set_tiny(train.c);
    REQUIRE(pmad_config_set(train.c, "data", dir.sub("data").c_str()) == PMAD_OK);
    REQUIRE(pmad_config_set(train.c, "out", dir.sub("train").c_str()) == PMAD_OK);
    REQUIRE(pmad_run_train(train.c) == PMAD_OK);
    const std::string ckpt = dir.sub("train") + "/model.ckpt";
    REQUIRE(fs::exists(ckpt));

    ConfigHandle ev;
    REQUIRE(pmad_config_set(ev.c, "data", dir.sub("data").c_str()) == PMAD_OK);
    REQUIRE(pmad_config_set(ev.c, "out", dir.sub("eval").c_str()) == PMAD_OK);
    REQUIRE(pmad_run_eval(ev.c, ckpt.c_str()) == PMAD_OK);
    CHECK(fs::exists(dir.sub("eval") + "/report.csv"));
    CHECK(fs::exists(dir.sub("eval") + "/scores.csv"));
    CHECK(fs::exists(dir.sub("eval") + "/heatmap.csv"));

    // architecture conflict surfaces as a config error
    ConfigHandle bad;
    REQUIRE(pmad_config_set(bad.c, "data", dir.sub("data").c_str()) == PMAD_OK);
    REQUIRE(pmad_config_set(bad.c, "out", dir.sub("eval2").c_str()) == PMAD_OK);
    REQUIRE(pmad_config_set(bad.c, "d_model", "24") == PMAD_OK);
    CHECK(pmad_run_eval(bad.c, ckpt.c_str()) == PMAD_ERR_INVALID);

    pmad_model* model = pmad_model_load(ckpt.c_str());
    REQUIRE(model != nullptr);
    CHECK(pmad_model_window(model) == 64);
    CHECK(pmad_model_patch_len(model) == 8);
    CHECK(pmad_model_mem_items(model) == 3);
    CHECK(pmad_model_domain_count(model) == 3);
    char* label = pmad_model_domain_label(model, 0);
    REQUIRE(label != nullptr);
    CHECK(std::string(label) == "SYN/Sine");
    pmad_string_free(label);
    CHECK(pmad_model_domain_label(model, 99) == nullptr);

    // two full windows -> every point scored
    std::vector<double> values(128);
    for (size_t i = 0; i < values.size(); ++i)
        values[i] = std::sin(2.0 * 3.14159265358979 * double(i) / 64.0);
    std::vector<double> scores(values.size(), -1.0);
    std::vector<int> excluded(values.size(), -1);
    REQUIRE(pmad_model_score(model, "SYN", "Sine", values.data(), values.size(), scores.data(),
                             excluded.data()) == PMAD_OK);
    for (size_t i = 0; i < values.size(); ++i) {
        CHECK(excluded[i] == 0);
        CHECK(std::isfinite(scores[i]));
        CHECK(scores[i] >= 0.0);
    }

    // 70 points: one window covers [0, 64), the 6-point tail is uncovered
    std::vector<double> head(values.begin(), values.begin() + 70);
    std::vector<double> s70(70, -1.0);
    std::vector<int> e70(70, -1);
    REQUIRE(pmad_model_score(model, nullptr, nullptr, head.data(), head.size(), s70.data(),
                             e70.data()) == PMAD_OK);
    for (int i = 0; i < 64; ++i) CHECK(e70[i] == 0);
    for (int i = 64; i < 70; ++i) {
        CHECK(e70[i] == 1);
        CHECK(s70[i] == 0.0);
    }

    pmad_model_free(model);
    CHECK(pmad_model_load(dir.sub("nope.ckpt").c_str()) == nullptr);
    CHECK(pmad_last_error()[0] != '\0');
}

TEST_CASE("error-code mapping: config errors vs runtime failures") {
    ConfigHandle empty;
    CHECK(pmad_run_train(empty.c) == PMAD_ERR_INVALID);  // no data directory

    TempDir dir("capi_diverge");
    REQUIRE(pmad_run_synth(7, dir.sub("data").c_str()) == PMAD_OK);
    ConfigHandle diverge;
    set_tiny(diverge.c);
    REQUIRE(pmad_config_set(diverge.c, "data", dir.sub("data").c_str()) == PMAD_OK);
    REQUIRE(pmad_config_set(diverge.c, "out", dir.sub("out").c_str()) == PMAD_OK);
    REQUIRE(pmad_config_set(diverge.c, "lr", "1e300") == PMAD_OK);
    CHECK(pmad_run_train(diverge.c) == PMAD_ERR_RUNTIME);
    CHECK(std::string(pmad_last_error()).find("diverged") != std::string::npos);

    CHECK(pmad_run_train(nullptr) == PMAD_ERR_INVALID);
    CHECK(pmad_run_eval(nullptr, "x") == PMAD_ERR_INVALID);
    CHECK(pmad_run_synth(1, nullptr) == PMAD_ERR_INVALID);
}
