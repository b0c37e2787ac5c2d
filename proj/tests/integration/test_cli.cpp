// Spawns the command-line binary and checks exit codes, artifacts, and
// determinism. The binary path comes in via FASTBVP_CLI_PATH.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fsys = std::filesystem;
using nlohmann::json;

namespace {

const char* cli() { return FASTBVP_CLI_PATH; }

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run(const std::string& args) {
    fsys::path tmp = fsys::temp_directory_path() / "fastbvp_cli_out.txt";
    std::string cmd = std::string(cli()) + " " + args + " > " + tmp.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::ifstream in(tmp);
    std::ostringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

std::string slurp(const fsys::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fsys::path fresh_dir(const char* leaf) {
    fsys::path dir = fsys::temp_directory_path() / leaf;
    fsys::remove_all(dir);
    fsys::create_directories(dir);
    return dir;
}

// One shared tiny world: corpus + trained checkpoint, built once.
struct World {
    fsys::path root = fresh_dir("fastbvp_cli_world");
    fsys::path corpus = root / "corpus";
    fsys::path train_dir = root / "run";

    World() {
        std::ofstream spec(root / "spec.json");
        spec << "{\"count\": 6, \"clip_seconds\": 15, \"noise_sigma\": 0.05, "
                "\"hr_lo\": 60.0, \"hr_hi\": 100.0, \"seed\": 3}";
        spec.close();
        std::ofstream tc(root / "train.json");
        tc << "{\"phase1_epochs\": 1, \"phase2_epochs\": 1, \"batch_size\": 3, "
              "\"val_fraction\": 0.0, \"seed\": 4}";
        tc.close();
        RunResult s = run("synth --config " + (root / "spec.json").string() +
                          " --out " + corpus.string());
        REQUIRE(s.exit_code == 0);
        RunResult t = run("train --corpus " + corpus.string() + " --config " +
                          (root / "train.json").string() + " --out " + train_dir.string());
        REQUIRE(t.exit_code == 0);
    }
};

World& world() {
    static World w;
    return w;
}

}  // namespace

TEST_CASE("help and argument errors use the documented exit codes") {
    CHECK(run("--help").exit_code == 0);
    CHECK(run("synth --help").exit_code == 0);
    CHECK(run("").exit_code == 2);
    CHECK(run("frobnicate").exit_code == 2);
    CHECK(run("infer --checkpoint x").exit_code == 2);  // missing required options
}

TEST_CASE("synth writes clips, truth files and a run manifest") {
    World& w = world();
    CHECK(fsys::exists(w.corpus / "manifest.json"));
    CHECK(fsys::exists(w.corpus / "clip_000.csv"));
    CHECK(fsys::exists(w.corpus / "clip_005.truth.json"));

    json manifest = json::parse(slurp(w.corpus / "run_manifest.json"));
    CHECK(manifest["command"] == "synth");
    CHECK(manifest["seed"] == 3);  // taken from the spec file
    CHECK(manifest["version"].is_string());
    CHECK(manifest["duration_seconds"].is_number());
    CHECK(manifest["outputs"]["corpus_dir"].is_string());
}

TEST_CASE("train leaves a checkpoint, history and manifest") {
    World& w = world();
    CHECK(fsys::exists(w.train_dir / "model.ckpt"));
    std::string hist = slurp(w.train_dir / "history.csv");
    CHECK(hist.rfind("epoch,phase,train_loss,val_mae", 0) == 0);

    json manifest = json::parse(slurp(w.train_dir / "run_manifest.json"));
    CHECK(manifest["command"] == "train");
    CHECK(manifest["inputs"]["corpus_dir"].is_string());
    CHECK(manifest["outputs"]["checkpoint"].is_string());
    CHECK(manifest["outputs"]["best_epoch"].is_number());
}

TEST_CASE("infer emits waveform, report, plots and manifest") {
    World& w = world();
    fsys::path out = w.root / "infer";
    RunResult r = run("infer --checkpoint " + (w.train_dir / "model.ckpt").string() +
                      " --input " + (w.corpus / "clip_000.csv").string() +
                      " --rate 30 --out " + out.string());
    REQUIRE(r.exit_code == 0);
    for (const char* f : {"bvp.csv", "report.json", "attention.json", "waveform.svg",
                          "attention.svg", "run_manifest.json"}) {
        CHECK(fsys::exists(out / f));
    }
    std::string bvp = slurp(out / "bvp.csv");
    CHECK(bvp.rfind("frame,bvp", 0) == 0);

    json report = json::parse(slurp(out / "report.json"));
    CHECK(report.contains("hr"));
    CHECK(report.contains("lf_nu"));
    CHECK(report.contains("hf_nu"));
    CHECK(report["hrv_warning"] == true);  // 15 s clip
    CHECK(report["duration_seconds"] == doctest::Approx(15.0));

    std::string svg = slurp(out / "waveform.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
}

TEST_CASE("infer is deterministic byte for byte") {
    World& w = world();
    fsys::path a = w.root / "infer_a", b = w.root / "infer_b";
    std::string base = "infer --checkpoint " + (w.train_dir / "model.ckpt").string() +
                       " --input " + (w.corpus / "clip_001.csv").string() + " --rate 30";
    REQUIRE(run(base + " --out " + a.string()).exit_code == 0);
    REQUIRE(run(base + " --out " + b.string()).exit_code == 0);
    CHECK(slurp(a / "bvp.csv") == slurp(b / "bvp.csv"));
    CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
}

TEST_CASE("infer refuses short clips with exit code 2") {
    World& w = world();
    // build a 5 s clip by truncating an existing one
    std::string full = slurp(w.corpus / "clip_000.csv");
    std::istringstream in(full);
    std::ostringstream out;
    std::string line;
    for (int i = 0; i <= 150 && std::getline(in, line); ++i) out << line << "\n";
    fsys::path short_csv = w.root / "short.csv";
    std::ofstream(short_csv) << out.str();

    RunResult r = run("infer --checkpoint " + (w.train_dir / "model.ckpt").string() +
                      " --input " + short_csv.string() + " --rate 30 --out " +
                      (w.root / "infer_short").string());
    CHECK(r.exit_code == 2);
    CHECK(r.out.find("insufficient") != std::string::npos);
}

TEST_CASE("eval writes the metric table with fixed columns") {
    World& w = world();
    fsys::path out_csv = w.root / "eval.csv";
    RunResult r = run("eval --checkpoint " + (w.train_dir / "model.ckpt").string() +
                      " --corpus " + w.corpus.string() + " --out " + out_csv.string());
    REQUIRE(r.exit_code == 0);
    std::string csv = slurp(out_csv);
    CHECK(csv.rfind("method,mae,rmse,std,r\n", 0) == 0);
    CHECK(csv.find("\ngreen,") != std::string::npos);
    CHECK(csv.find("\nchrom,") != std::string::npos);
    CHECK(csv.find("\npos,") != std::string::npos);
    CHECK(csv.rfind("method,mae", 0) == 0);
    CHECK(fsys::exists(w.root / "eval.csv.manifest.json"));

    // baselines-only table when no checkpoint is given
    fsys::path out2 = w.root / "eval2.csv";
    RunResult r2 = run("eval --corpus " + w.corpus.string() + " --out " + out2.string());
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp(out2).find("fastbvp,") == std::string::npos);
}

TEST_CASE("budget prints totals and per-layer rows for both lengths") {
    RunResult r = run("budget");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("total params: 11065") != std::string::npos);
    CHECK(r.out.find("T = 450") != std::string::npos);
    CHECK(r.out.find("T = 900") != std::string::npos);
    CHECK(r.out.find("decompose.dct") != std::string::npos);
    CHECK(r.out.find("head") != std::string::npos);
}

TEST_CASE("decompose dumps band csv next to a manifest") {
    World& w = world();
    fsys::path out_csv = w.root / "dec.csv";
    RunResult r = run("decompose --input " + (w.corpus / "clip_000.csv").string() +
                      " --rate 30 --out " + out_csv.string());
    REQUIRE(r.exit_code == 0);
    std::string csv = slurp(out_csv);
    CHECK(csv.rfind("band,frame,", 0) == 0);
    CHECK(fsys::exists(w.root / "dec.csv.manifest.json"));
}

TEST_CASE("io failures exit with code 2 and a reason") {
    World& w = world();
    RunResult r = run("infer --checkpoint /no/model.ckpt --input " +
                      (w.corpus / "clip_000.csv").string() + " --out " +
                      (w.root / "x").string());
    CHECK(r.exit_code == 2);
    CHECK(r.out.find("error") != std::string::npos);

    RunResult r2 = run("train --corpus /no/corpus --out " + (w.root / "y").string());
    CHECK(r2.exit_code == 2);

    RunResult r3 = run("synth --config /no/spec.json --out " + (w.root / "z").string());
    CHECK(r3.exit_code == 2);
}
