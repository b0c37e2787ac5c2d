// Exercises the shared-library C interface end to end. Nothing here may
// include core headers; the only contract is fastbvp/fastbvp.h.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fastbvp/fastbvp.h"

extern "C" int capi_header_works_from_c(void);

namespace fsys = std::filesystem;

namespace {

struct Str {
    char* p = nullptr;
    ~Str() { fbv_string_free(p); }
    std::string str() const { return p ? std::string(p) : std::string(); }
};

fsys::path scratch_dir(const char* leaf) {
    fsys::path dir = fsys::temp_directory_path() / leaf;
    fsys::remove_all(dir);
    fsys::create_directories(dir);
    return dir;
}

// A tiny deterministic corpus shared by the training/eval cases.
std::string small_corpus(const char* leaf, int count, double seconds, double noise) {
    fsys::path dir = scratch_dir(leaf);
    char spec[256];
    std::snprintf(spec, sizeof(spec),
                  "{\"count\": %d, \"clip_seconds\": %.1f, \"noise_sigma\": %.2f, "
                  "\"hr_lo\": 60.0, \"hr_hi\": 110.0, \"seed\": 5}",
                  count, seconds, noise);
    REQUIRE(fbv_synth_corpus(spec, dir.string().c_str()) == FBV_OK);
    return dir.string();
}

}  // namespace

TEST_CASE("header is consumable from plain c") {
    CHECK(capi_header_works_from_c() == 1);
}

TEST_CASE("version and status strings") {
    CHECK(std::strcmp(fbv_version(), "0.1.0") == 0);
    CHECK(std::strcmp(fbv_status_name(FBV_OK), "ok") == 0);
    CHECK(std::strcmp(fbv_status_name(FBV_ERR_CONFIG), "config") == 0);
}

TEST_CASE("null arguments are rejected with a message") {
    CHECK(fbv_stmap_load(nullptr, 30.0, nullptr) == FBV_ERR_ARGUMENT);
    CHECK(std::string(fbv_last_error()).size() > 0);
    CHECK(fbv_model_create(nullptr, 1, nullptr) == FBV_ERR_ARGUMENT);
}

TEST_CASE("stmap round-trip through csv text") {
    std::string csv = "frame,r1_R,r1_G,r1_B\n";
    for (int t = 0; t < 64; ++t) {
        csv += std::to_string(t) + "," + std::to_string(100 + t % 3) + ",120,90\n";
    }
    fbv_stmap* map = nullptr;
    REQUIRE(fbv_stmap_from_csv(csv.c_str(), 30.0, &map) == FBV_OK);
    int regions = 0, frames = 0;
    double rate = 0.0;
    REQUIRE(fbv_stmap_info(map, &regions, &frames, &rate) == FBV_OK);
    CHECK(regions == 1);
    CHECK(frames == 64);
    CHECK(rate == 30.0);
    fbv_stmap_free(map);

    CHECK(fbv_stmap_from_csv("not,a,map\n", 30.0, &map) == FBV_ERR_SCHEMA);
    CHECK(fbv_stmap_load("/no/such/file.csv", 30.0, &map) == FBV_ERR_IO);
}

TEST_CASE("default configs are valid json") {
    Str model, train, synth;
    REQUIRE(fbv_default_model_config(&model.p) == FBV_OK);
    REQUIRE(fbv_default_train_config(&train.p) == FBV_OK);
    REQUIRE(fbv_default_synth_spec(&synth.p) == FBV_OK);
    CHECK(model.str().find("\"bands\"") != std::string::npos);
    CHECK(train.str().find("\"batch_size\"") != std::string::npos);
    CHECK(synth.str().find("\"clip_seconds\"") != std::string::npos);
}

TEST_CASE("budget report carries params, totals and per-layer rows") {
    Str rep;
    REQUIRE(fbv_budget_report(nullptr, 900, &rep.p) == FBV_OK);
    std::string j = rep.str();
    CHECK(j.find("\"params\": 11065") != std::string::npos);
    CHECK(j.find("\"total_flops\": 114324640") != std::string::npos);
    CHECK(j.find("\"layers\"") != std::string::npos);

    CHECK(fbv_budget_report(nullptr, 37, &rep.p) == FBV_ERR_CONFIG);
    CHECK(fbv_budget_report("{\"nope\": 1}", 900, &rep.p) == FBV_ERR_SCHEMA);
}

TEST_CASE("model create, save, load, config round-trip") {
    fsys::path dir = scratch_dir("fbv_capi_model");
    fbv_model* model = nullptr;
    REQUIRE(fbv_model_create(nullptr, 7, &model) == FBV_OK);

    Str cfg;
    REQUIRE(fbv_model_config(model, &cfg.p) == FBV_OK);
    CHECK(cfg.str().find("\"regions\"") != std::string::npos);

    std::string ckpt = (dir / "m.ckpt").string();
    REQUIRE(fbv_model_save(model, ckpt.c_str()) == FBV_OK);
    fbv_model_free(model);

    fbv_model* back = nullptr;
    REQUIRE(fbv_model_load(ckpt.c_str(), &back) == FBV_OK);
    fbv_model_free(back);

    CHECK(fbv_model_load("/no/file.ckpt", &back) == FBV_ERR_IO);
    fsys::remove_all(dir);
}

TEST_CASE("synth corpus, load, info") {
    std::string dir = small_corpus("fbv_capi_corpus", 4, 15.0, 0.05);
    fbv_corpus* corpus = nullptr;
    REQUIRE(fbv_corpus_load(dir.c_str(), &corpus) == FBV_OK);
    int clips = 0, frames = 0;
    double rate = 0.0;
    REQUIRE(fbv_corpus_info(corpus, &clips, &frames, &rate) == FBV_OK);
    CHECK(clips == 4);
    CHECK(frames == 450);
    CHECK(rate == 30.0);
    fbv_corpus_free(corpus);
    fsys::remove_all(dir);

    CHECK(fbv_corpus_load("/no/such/corpus", &corpus) == FBV_ERR_IO);
    CHECK(fbv_synth_corpus("{\"count\": 0}", "/tmp/fbv_capi_zero") == FBV_ERR_CONFIG);
}

TEST_CASE("fit, infer and eval through the c interface") {
    std::string dir = small_corpus("fbv_capi_train", 6, 15.0, 0.05);
    fbv_corpus* corpus = nullptr;
    REQUIRE(fbv_corpus_load(dir.c_str(), &corpus) == FBV_OK);

    fbv_model* model = nullptr;
    REQUIRE(fbv_model_create(nullptr, 3, &model) == FBV_OK);

    const char* tc =
        "{\"phase1_epochs\": 1, \"phase2_epochs\": 1, \"batch_size\": 3, "
        "\"val_fraction\": 0.0, \"seed\": 2}";
    Str history;
    int best_epoch = -1;
    double best_val = 0.0;
    REQUIRE(fbv_fit(model, corpus, tc, 1, nullptr, nullptr, &history.p, &best_epoch,
                    &best_val) == FBV_OK);
    CHECK(history.str().rfind("epoch,phase,train_loss,val_mae", 0) == 0);
    CHECK(best_epoch >= 1);

    // inference on one of the corpus clips via its csv
    fbv_stmap* map = nullptr;
    fsys::path clip = fsys::path(dir) / "clip_000.csv";
    REQUIRE(fbv_stmap_load(clip.string().c_str(), 30.0, &map) == FBV_OK);

    double* bvp = nullptr;
    size_t len = 0;
    Str report, attn;
    REQUIRE(fbv_infer(model, map, 1, &bvp, &len, &report.p, &attn.p) == FBV_OK);
    CHECK(len == 450);
    bool finite = true;
    for (size_t i = 0; i < len; ++i) finite = finite && std::isfinite(bvp[i]);
    CHECK(finite);
    CHECK(report.str().find("\"hr\"") != std::string::npos);
    CHECK(report.str().find("\"hrv_warning\": true") != std::string::npos);
    CHECK(attn.str().find("\"blocks\"") != std::string::npos);
    fbv_buffer_free(bvp);

    // baselines through the same surface
    double* gb = nullptr;
    size_t glen = 0;
    REQUIRE(fbv_baseline_infer(map, "green", &gb, &glen, nullptr) == FBV_OK);
    CHECK(glen == 450);
    fbv_buffer_free(gb);
    CHECK(fbv_baseline_infer(map, "magic", &gb, &glen, nullptr) == FBV_ERR_ARGUMENT);

    Str csv;
    REQUIRE(fbv_eval(model, corpus, 1, &csv.p) == FBV_OK);
    CHECK(csv.str().rfind("method,mae,rmse,std,r", 0) == 0);
    CHECK(csv.str().find("fastbvp,") != std::string::npos);

    Str csv_no_model;
    REQUIRE(fbv_eval(nullptr, corpus, 1, &csv_no_model.p) == FBV_OK);
    CHECK(csv_no_model.str().find("fastbvp,") == std::string::npos);
    CHECK(csv_no_model.str().find("green,") != std::string::npos);

    fbv_stmap_free(map);
    fbv_model_free(model);
    fbv_corpus_free(corpus);
    fsys::remove_all(dir);
}

TEST_CASE("infer requires fifteen seconds of signal") {
    std::string csv = "frame,r1_R,r1_G,r1_B,r2_R,r2_G,r2_B,r3_R,r3_G,r3_B,r4_R,r4_G,r4_B\n";
    for (int t = 0; t < 150; ++t) {
        csv += std::to_string(t);
        for (int k = 0; k < 12; ++k) csv += "," + std::to_string(100 + ((t + k) % 7));
        csv += "\n";
    }
    fbv_stmap* map = nullptr;
    REQUIRE(fbv_stmap_from_csv(csv.c_str(), 30.0, &map) == FBV_OK);

    fbv_model* model = nullptr;
    REQUIRE(fbv_model_create(nullptr, 1, &model) == FBV_OK);
    double* bvp = nullptr;
    size_t len = 0;
    CHECK(fbv_infer(model, map, 1, &bvp, &len, nullptr, nullptr) ==
          FBV_ERR_INSUFFICIENT);
    CHECK(std::string(fbv_last_error()).find("15") != std::string::npos);
    fbv_model_free(model);
    fbv_stmap_free(map);
}

TEST_CASE("decompose csv dumps one row per band and frame") {
    std::string csv = "frame,r1_R,r1_G,r1_B\n";
    for (int t = 0; t < 90; ++t) {
        csv += std::to_string(t) + "," + std::to_string(90 + (t * t) % 23) + ",120," +
               std::to_string(80 + (t % 5)) + "\n";
    }
    fbv_stmap* map = nullptr;
    REQUIRE(fbv_stmap_from_csv(csv.c_str(), 30.0, &map) == FBV_OK);
    Str out;
    REQUIRE(fbv_decompose_csv(map, nullptr, 1, &out.p) == FBV_OK);
    std::string text = out.str();
    CHECK(text.rfind("band,frame,r1_Y,r1_U,r1_V\n", 0) == 0);
    // 4 default bands x 90 frames plus a header
    size_t rows = 0;
    for (char ch : text) rows += (ch == '\n');
    CHECK(rows == 1 + 4 * 90);
    fbv_stmap_free(map);
}
