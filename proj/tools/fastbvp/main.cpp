// Command-line front end. Everything below talks to the core exclusively
// through the public C interface in fastbvp/fastbvp.h.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fastbvp/fastbvp.h"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// ---- small utilities ---------------------------------------------------------

int exit_code_for(fbv_status st) {
    if (st == FBV_OK) return 0;
    if (st == FBV_ERR_DIVERGED || st == FBV_ERR_INTERNAL) return 3;
    return 2;
}

int fail(fbv_status st) {
    std::fprintf(stderr, "error (%s): %s\n", fbv_status_name(st), fbv_last_error());
    return exit_code_for(st);
}

int fail_usage(const std::string& msg) {
    std::fprintf(stderr, "error (argument): %s\n", msg.c_str());
    return 2;
}

// Owned C string from the API.
struct ApiString {
    char* ptr = nullptr;
    ~ApiString() { fbv_string_free(ptr); }
    std::string str() const { return ptr ? std::string(ptr) : std::string(); }
};

struct ApiBuffer {
    double* ptr = nullptr;
    size_t len = 0;
    ~ApiBuffer() { fbv_buffer_free(ptr); }
};

bool read_file(const std::string& path, std::string& out, std::string& err) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        err = "cannot open '" + path + "'";
        return false;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    out = ss.str();
    return true;
}

bool write_file(const std::string& path, const std::string& text, std::string& err) {
    fs::path p(path);
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        err = "cannot write '" + path + "'";
        return false;
    }
    out << text;
    out.flush();
    if (!out) {
        err = "write failed for '" + path + "'";
        return false;
    }
    return true;
}

// Loads a JSON config file when given, otherwise takes the library default;
// an explicit --seed overrides the config's seed field when the schema has
// one (synth specs and train configs).
bool load_config_json(const std::string& path, fbv_status (*default_fn)(char**),
                      bool seed_set, uint64_t seed, bool patch_seed,
                      std::string& json_out, std::string& err) {
    if (path.empty()) {
        ApiString def;
        fbv_status st = default_fn(&def.ptr);
        if (st != FBV_OK) {
            err = fbv_last_error();
            return false;
        }
        json_out = def.str();
    } else if (!read_file(path, json_out, err)) {
        return false;
    }
    if (patch_seed && seed_set) {
        try {
            json j = json::parse(json_out);
            j["seed"] = seed;
            json_out = j.dump(2);
        } catch (const json::exception& e) {
            err = "config '" + (path.empty() ? std::string("<default>") : path) +
                  "' is not valid JSON: " + e.what();
            return false;
        }
    }
    return true;
}

struct RunClock {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    }
};

// Every successful run leaves exactly one manifest describing it.
bool write_manifest(const std::string& path, const std::string& command,
                    const ordered_json& configs, const ordered_json& inputs,
                    const ordered_json& outputs, uint64_t seed, int threads,
                    const RunClock& clock, std::string& err) {
    ordered_json m;
    m["command"] = command;
    m["version"] = fbv_version();
    m["seed"] = seed;
    m["threads"] = threads;
    m["configs"] = configs;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["duration_seconds"] = clock.seconds();
    return write_file(path, m.dump(2) + "\n", err);
}

// ---- SVG rendering --------------------------------------------------------------

std::string svg_escape_done(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string waveform_svg(const std::vector<double>& y, double fs, const std::string& title) {
    const double w = 960, h = 260, ml = 50, mr = 15, mt = 28, mb = 34;
    const double pw = w - ml - mr, ph = h - mt - mb;
    double lo = y.empty() ? 0.0 : y[0], hi = lo;
    for (double v : y) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << w << " " << h
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    s << "<text x=\"" << ml << "\" y=\"18\" font-size=\"14\">" << title << "</text>\n";
    s << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\""
      << ph << "\" fill=\"none\" stroke=\"#999\"/>\n";
    s << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.2\" points=\"";
    for (size_t i = 0; i < y.size(); ++i) {
        double px = ml + pw * (y.size() > 1 ? double(i) / (y.size() - 1) : 0.5);
        double py = mt + ph * (1.0 - (y[i] - lo) / (hi - lo));
        s << svg_escape_done(px) << "," << svg_escape_done(py) << " ";
    }
    s << "\"/>\n";
    double dur = fs > 0 ? y.size() / fs : 0.0;
    for (int k = 0; k <= 4; ++k) {
        double tx = ml + pw * k / 4.0;
        s << "<text x=\"" << svg_escape_done(tx) << "\" y=\"" << (h - 12)
          << "\" text-anchor=\"middle\">" << svg_escape_done(dur * k / 4.0)
          << "s</text>\n";
    }
    s << "<text x=\"12\" y=\"" << (mt + 12) << "\">" << svg_escape_done(hi)
      << "</text>\n<text x=\"12\" y=\"" << (mt + ph) << "\">" << svg_escape_done(lo)
      << "</text>\n";
    s << "</svg>\n";
    return s.str();
}

// Channel-averaged attention heatmaps, one per reconstruction block.
std::string attention_svg(const std::string& attention_json, std::string& err) {
    json j;
    try {
        j = json::parse(attention_json);
    } catch (const json::exception& e) {
        err = std::string("attention payload is not valid JSON: ") + e.what();
        return "";
    }
    const auto& blocks = j["blocks"];
    const double cell = 26.0, gap = 46.0, mt = 40.0, ml = 20.0;
    double x = ml;
    double height = 0;
    std::ostringstream s;
    std::ostringstream body;
    for (const auto& b : blocks) {
        int segs = b["segments"].get<int>();
        int channels = b["channels"].get<int>();
        std::vector<double> avg(static_cast<size_t>(segs) * segs, 0.0);
        for (const auto& ch : b["weights"]) {
            for (int i = 0; i < segs; ++i) {
                for (int k = 0; k < segs; ++k) {
                    avg[static_cast<size_t>(i) * segs + k] += ch[i][k].get<double>();
                }
            }
        }
        double peak = 1e-12;
        for (auto& v : avg) {
            v /= channels;
            peak = std::max(peak, v);
        }
        body << "<text x=\"" << x << "\" y=\"" << (mt - 14) << "\">block "
             << b["block"].get<int>() << "</text>\n";
        for (int i = 0; i < segs; ++i) {
            for (int k = 0; k < segs; ++k) {
                int shade =
                    255 - static_cast<int>(std::lround(
                              215.0 * avg[static_cast<size_t>(i) * segs + k] / peak));
                body << "<rect x=\"" << svg_escape_done(x + k * cell) << "\" y=\""
                     << svg_escape_done(mt + i * cell) << "\" width=\"" << cell
                     << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << ","
                     << shade << ",255)\" stroke=\"#ddd\"/>\n";
            }
        }
        height = std::max(height, mt + segs * cell + 20);
        x += segs * cell + gap;
    }
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << (x + ml) << " "
      << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<rect width=\"" << (x + ml) << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
    s << "<text x=\"" << ml
      << "\" y=\"16\" font-size=\"14\">Reconstruction attention (channel mean)</text>\n";
    s << body.str() << "</svg>\n";
    return s.str();
}

std::string bvp_csv(const double* samples, size_t len) {
    std::string out = "frame,bvp\n";
    char buf[48];
    for (size_t i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.10g\n", i, samples[i]);
        out += buf;
    }
    return out;
}

}  // namespace

// ---- subcommands -------------------------------------------------------------------

static int cmd_synth(const std::string& config_path, const std::string& out_dir,
                     bool seed_set, uint64_t seed, int threads) {
    RunClock clock;
    std::string spec_json, err;
    if (!load_config_json(config_path, fbv_default_synth_spec, seed_set, seed, true,
                          spec_json, err)) {
        return fail_usage(err);
    }
    fbv_status st = fbv_synth_corpus(spec_json.c_str(), out_dir.c_str());
    if (st != FBV_OK) return fail(st);

    uint64_t effective_seed = seed;
    try {
        effective_seed = json::parse(spec_json).value("seed", seed);
    } catch (const json::exception&) {
    }
    std::string manifest = (fs::path(out_dir) / "run_manifest.json").string();
    if (!write_manifest(manifest, "synth",
                        {{"spec", config_path.empty() ? "<default>" : config_path}},
                        ordered_json::object(), {{"corpus_dir", out_dir}},
                        effective_seed, threads, clock, err)) {
        return fail_usage(err);
    }
    std::printf("corpus written to %s\n", out_dir.c_str());
    return 0;
}

static int cmd_train(const std::string& corpus_dir, const std::string& train_config_path,
                     const std::string& model_config_path, const std::string& out_dir,
                     bool seed_set, uint64_t seed, int threads) {
    RunClock clock;
    std::string train_json, model_json, err;
    if (!load_config_json(train_config_path, fbv_default_train_config, seed_set, seed,
                          true, train_json, err)) {
        return fail_usage(err);
    }
    if (!load_config_json(model_config_path, fbv_default_model_config, false, 0, false,
                          model_json, err)) {
        return fail_usage(err);
    }
    uint64_t effective_seed = seed;
    try {
        effective_seed = json::parse(train_json).value("seed", seed);
    } catch (const json::exception&) {
    }

    fbv_corpus* corpus = nullptr;
    fbv_status st = fbv_corpus_load(corpus_dir.c_str(), &corpus);
    if (st != FBV_OK) return fail(st);

    fbv_model* model = nullptr;
    st = fbv_model_create(model_json.c_str(), effective_seed, &model);
    if (st != FBV_OK) {
        fbv_corpus_free(corpus);
        return fail(st);
    }

    auto progress = [](int epoch, int phase, double train_loss, double val_mae, void*) {
        std::printf("epoch %d phase %d loss %.6f val_mae %.4f\n", epoch, phase,
                    train_loss, val_mae);
        std::fflush(stdout);
    };
    ApiString history;
    int best_epoch = 0;
    double best_val_mae = 0.0;
    st = fbv_fit(model, corpus, train_json.c_str(), threads, progress, nullptr,
                 &history.ptr, &best_epoch, &best_val_mae);
    fbv_corpus_free(corpus);
    if (st != FBV_OK) {
        fbv_model_free(model);
        return fail(st);
    }

    std::string ckpt = (fs::path(out_dir) / "model.ckpt").string();
    st = fbv_model_save(model, ckpt.c_str());
    fbv_model_free(model);
    if (st != FBV_OK) return fail(st);

    std::string history_path = (fs::path(out_dir) / "history.csv").string();
    if (!write_file(history_path, history.str(), err)) return fail_usage(err);

    std::string manifest = (fs::path(out_dir) / "run_manifest.json").string();
    ordered_json outputs = {{"checkpoint", ckpt},
                            {"history", history_path},
                            {"best_epoch", best_epoch},
                            {"best_val_mae", best_val_mae}};
    if (!write_manifest(manifest, "train",
                        {{"train", train_config_path.empty() ? "<default>"
                                                             : train_config_path},
                         {"model", model_config_path.empty() ? "<default>"
                                                             : model_config_path}},
                        {{"corpus_dir", corpus_dir}}, outputs, effective_seed, threads,
                        clock, err)) {
        return fail_usage(err);
    }
    std::printf("best epoch %d val_mae %.4f\ncheckpoint written to %s\n", best_epoch,
                best_val_mae, ckpt.c_str());
    return 0;
}

static int cmd_infer(const std::string& checkpoint, const std::string& input_csv,
                     double rate, const std::string& out_dir, uint64_t seed,
                     int threads) {
    RunClock clock;
    fbv_model* model = nullptr;
    fbv_status st = fbv_model_load(checkpoint.c_str(), &model);
    if (st != FBV_OK) return fail(st);

    fbv_stmap* map = nullptr;
    st = fbv_stmap_load(input_csv.c_str(), rate, &map);
    if (st != FBV_OK) {
        fbv_model_free(model);
        return fail(st);
    }

    ApiBuffer bvp;
    ApiString report, attention;
    st = fbv_infer(model, map, threads, &bvp.ptr, &bvp.len, &report.ptr, &attention.ptr);
    fbv_stmap_free(map);
    fbv_model_free(model);
    if (st != FBV_OK) return fail(st);

    std::string err;
    std::string bvp_path = (fs::path(out_dir) / "bvp.csv").string();
    std::string report_path = (fs::path(out_dir) / "report.json").string();
    std::string attn_path = (fs::path(out_dir) / "attention.json").string();
    std::string wave_svg_path = (fs::path(out_dir) / "waveform.svg").string();
    std::string attn_svg_path = (fs::path(out_dir) / "attention.svg").string();
    if (!write_file(bvp_path, bvp_csv(bvp.ptr, bvp.len), err)) return fail_usage(err);
    if (!write_file(report_path, report.str() + "\n", err)) return fail_usage(err);
    if (!write_file(attn_path, attention.str() + "\n", err)) return fail_usage(err);

    std::vector<double> samples(bvp.ptr, bvp.ptr + bvp.len);
    if (!write_file(wave_svg_path, waveform_svg(samples, rate, "Recovered BVP waveform"),
                    err)) {
        return fail_usage(err);
    }
    std::string attn_svg = attention_svg(attention.str(), err);
    if (attn_svg.empty()) return fail_usage(err);
    if (!write_file(attn_svg_path, attn_svg, err)) return fail_usage(err);

    std::string manifest = (fs::path(out_dir) / "run_manifest.json").string();
    if (!write_manifest(manifest, "infer", {{"checkpoint", checkpoint}},
                        {{"stmap", input_csv}, {"sample_rate", rate}},
                        {{"bvp", bvp_path},
                         {"report", report_path},
                         {"attention", attn_path},
                         {"waveform_svg", wave_svg_path},
                         {"attention_svg", attn_svg_path}},
                        seed, threads, clock, err)) {
        return fail_usage(err);
    }
    std::printf("%s\n", report.str().c_str());
    return 0;
}

static int cmd_eval(const std::string& checkpoint, const std::string& corpus_dir,
                    const std::string& out_path, uint64_t seed, int threads) {
    RunClock clock;
    fbv_model* model = nullptr;
    fbv_status st = FBV_OK;
    if (!checkpoint.empty()) {
        st = fbv_model_load(checkpoint.c_str(), &model);
        if (st != FBV_OK) return fail(st);
    }
    fbv_corpus* corpus = nullptr;
    st = fbv_corpus_load(corpus_dir.c_str(), &corpus);
    if (st != FBV_OK) {
        fbv_model_free(model);
        return fail(st);
    }
    ApiString csv;
    st = fbv_eval(model, corpus, threads, &csv.ptr);
    fbv_corpus_free(corpus);
    fbv_model_free(model);
    if (st != FBV_OK) return fail(st);

    std::string err;
    if (!write_file(out_path, csv.str(), err)) return fail_usage(err);
    std::string manifest = out_path + ".manifest.json";
    if (!write_manifest(manifest, "eval",
                        {{"checkpoint", checkpoint.empty() ? "<none>" : checkpoint}},
                        {{"corpus_dir", corpus_dir}}, {{"metrics", out_path}}, seed,
                        threads, clock, err)) {
        return fail_usage(err);
    }
    std::printf("%s", csv.str().c_str());
    return 0;
}

static int cmd_budget(const std::string& config_path, std::vector<int> frames,
                      const std::string& out_path) {
    std::string config_json, err;
    if (!load_config_json(config_path, fbv_default_model_config, false, 0, false,
                          config_json, err)) {
        return fail_usage(err);
    }
    if (frames.empty()) frames = {450, 900};

    ordered_json all = ordered_json::array();
    for (size_t fi = 0; fi < frames.size(); ++fi) {
        ApiString rep;
        fbv_status st = fbv_budget_report(config_json.c_str(), frames[fi], &rep.ptr);
        if (st != FBV_OK) return fail(st);
        ordered_json j = ordered_json::parse(rep.str());
        if (fi == 0) {
            std::printf("total params: %llu\n",
                        static_cast<unsigned long long>(j["params"].get<uint64_t>()));
        }
        std::printf("\nforward FLOPs for T = %d: %lld\n", frames[fi],
                    static_cast<long long>(j["total_flops"].get<int64_t>()));
        std::printf("%-24s %14s\n", "layer", "flops");
        for (const auto& item : j["layers"]) {
            std::printf("%-24s %14lld\n", item["name"].get<std::string>().c_str(),
                        static_cast<long long>(item["flops"].get<int64_t>()));
        }
        all.push_back(j);
    }
    if (!out_path.empty()) {
        if (!write_file(out_path, all.dump(2) + "\n", err)) return fail_usage(err);
    }
    return 0;
}

static int cmd_decompose(const std::string& input_csv, double rate,
                         const std::string& bands_path, const std::string& out_path,
                         uint64_t seed, int threads) {
    RunClock clock;
    std::string bands_json, err;
    if (!bands_path.empty() && !read_file(bands_path, bands_json, err)) {
        return fail_usage(err);
    }
    fbv_stmap* map = nullptr;
    fbv_status st = fbv_stmap_load(input_csv.c_str(), rate, &map);
    if (st != FBV_OK) return fail(st);

    ApiString csv;
    st = fbv_decompose_csv(map, bands_path.empty() ? nullptr : bands_json.c_str(),
                           threads, &csv.ptr);
    fbv_stmap_free(map);
    if (st != FBV_OK) return fail(st);

    if (!write_file(out_path, csv.str(), err)) return fail_usage(err);
    std::string manifest = out_path + ".manifest.json";
    if (!write_manifest(manifest, "decompose",
                        {{"bands", bands_path.empty() ? "<default>" : bands_path}},
                        {{"stmap", input_csv}, {"sample_rate", rate}},
                        {{"csv", out_path}}, seed, threads, clock, err)) {
        return fail_usage(err);
    }
    std::printf("decomposition written to %s\n", out_path.c_str());
    return 0;
}

int main(int argc, char** argv) {
    CLI::App app{"FastBVP-Net: pulse waveform recovery from spatial-temporal maps"};
    app.require_subcommand(1);
    app.fallthrough();

    uint64_t seed = 1;
    int threads = 1;
    app.add_option("--seed", seed, "Master seed for all randomness");
    app.add_option("--threads", threads, "Worker threads (results identical for any N)")
        ->check(CLI::Range(1, 256));

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
    std::string synth_config, synth_out;
    synth->add_option("--config", synth_config, "Synth spec JSON path");
    synth->add_option("--out", synth_out, "Output corpus directory")->required();

    // train
    auto* train = app.add_subcommand("train", "Train a model on a corpus");
    std::string train_corpus, train_config, train_model_config, train_out;
    train->add_option("--corpus", train_corpus, "Corpus directory")->required();
    train->add_option("--config", train_config, "Train config JSON path");
    train->add_option("--model-config", train_model_config, "Model config JSON path");
    train->add_option("--out", train_out, "Output directory")->required();

    // infer
    auto* infer = app.add_subcommand("infer", "Recover BVP + physiology from an stmap");
    std::string infer_ckpt, infer_input, infer_out;
    double infer_rate = 30.0;
    infer->add_option("--checkpoint", infer_ckpt, "Model checkpoint path")->required();
    infer->add_option("--input", infer_input, "Spatial-temporal map CSV")->required();
    infer->add_option("--rate", infer_rate, "Sample rate in Hz (default 30)");
    infer->add_option("--out", infer_out, "Output directory")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate model + baselines on a corpus");
    std::string eval_ckpt, eval_corpus, eval_out;
    eval->add_option("--checkpoint", eval_ckpt,
                     "Model checkpoint path (omit for baselines only)");
    eval->add_option("--corpus", eval_corpus, "Corpus directory")->required();
    eval->add_option("--out", eval_out, "Output CSV path")->required();

    // budget
    auto* budget = app.add_subcommand("budget", "Report parameter and FLOP budget");
    std::string budget_config, budget_out;
    std::vector<int> budget_frames;
    budget->add_option("--config", budget_config, "Model config JSON path");
    budget->add_option("--frames", budget_frames, "Clip lengths (default 450 900)");
    budget->add_option("--out", budget_out, "Optional JSON report path");

    // decompose
    auto* decompose =
        app.add_subcommand("decompose", "Dump the multi-band decomposition as CSV");
    std::string dec_input, dec_bands, dec_out;
    double dec_rate = 30.0;
    decompose->add_option("--input", dec_input, "Spatial-temporal map CSV")->required();
    decompose->add_option("--rate", dec_rate, "Sample rate in Hz (default 30)");
    decompose->add_option("--bands", dec_bands, "Band definition JSON path");
    decompose->add_option("--out", dec_out, "Output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    bool seed_set = app.count("--seed") > 0;

    if (synth->parsed()) return cmd_synth(synth_config, synth_out, seed_set, seed, threads);
    if (train->parsed()) {
        return cmd_train(train_corpus, train_config, train_model_config, train_out,
                         seed_set, seed, threads);
    }
    if (infer->parsed()) {
        return cmd_infer(infer_ckpt, infer_input, infer_rate, infer_out, seed, threads);
    }
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_corpus, eval_out, seed, threads);
    if (budget->parsed()) return cmd_budget(budget_config, budget_frames, budget_out);
    if (decompose->parsed()) {
        return cmd_decompose(dec_input, dec_rate, dec_bands, dec_out, seed, threads);
    }
    return fail_usage("no subcommand given");
}
