// Shipping gate: nine checks, one PASS/FAIL line each, non-zero exit when any
// fails. Tolerances are pinned here in code, not configurable.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/common.hpp"
#include "core/nn.hpp"
#include "core/physio.hpp"
#include "core/pipeline.hpp"
#include "core/spectral.hpp"
#include "core/srrn.hpp"
#include "core/stmap.hpp"
#include "core/synth.hpp"
#include "core/train.hpp"

using namespace fastbvp;
namespace fsys = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

int g_failures = 0;

void report(int criterion, const char* label, bool ok, const std::string& detail) {
    std::printf("criterion %d (%s): %s  [%s]\n", criterion, label,
                ok ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

// ---- criterion 1: budget via the command-line tool ---------------------------

void criterion_budget() {
    Timer timer;
    fsys::path out = fsys::temp_directory_path() / "fastbvp_accept_budget.json";
    std::string cmd = std::string(FASTBVP_CLI_PATH) + " budget --out " + out.string() +
                      " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    double elapsed = timer.seconds();
    bool ran = WIFEXITED(rc) && WEXITSTATUS(rc) == 0;

    int64_t params = 0, flops900 = 0;
    if (ran) {
        std::ifstream in(out);
        json doc = json::parse(in, nullptr, false);
        if (!doc.is_discarded()) {
            for (const auto& entry : doc) {
                if (entry["frames"] == 900) flops900 = entry["total_flops"];
                params = entry["params"];
            }
        }
    }
    bool ok = ran && params >= 9000 && params <= 13000 && flops900 >= 50000000 &&
              flops900 <= 260000000 && elapsed < 1.0;
    report(1, "budget", ok,
           fmt("params=%lld flops(900)=%lld runtime=%.3fs", (long long)params,
               (long long)flops900, elapsed));
}

// ---- criterion 2: spectral properties ---------------------------------------

void criterion_spectral() {
    Timer timer;
    Rng rng(2024);
    double max_rt = 0.0, max_parseval = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> x(900);
        for (double& v : x) v = rng.gaussian();
        Spectrum s = dct2(x, 30.0);
        std::vector<double> back = idct2(s);
        double ex = 0.0, es = 0.0;
        for (int k = 0; k < 900; ++k) {
            max_rt = std::max(max_rt, std::abs(back[k] - x[k]));
            ex += x[k] * x[k];
            es += s.coeffs[k] * s.coeffs[k];
        }
        max_parseval = std::max(max_parseval, std::abs(ex - es) / ex);
    }

    // partition identity over a contiguous cover of the axis
    double max_part = 0.0;
    {
        std::vector<double> x(900);
        for (double& v : x) v = rng.gaussian();
        Spectrum s = dct2(x, 30.0);
        std::vector<FrequencyBand> cover = default_bands();
        cover.push_back({cover.back().hi, 15.0});
        std::vector<double> sum(900, 0.0);
        for (const auto& b : cover) {
            std::vector<double> part = band_filter(s, b);
            for (int k = 0; k < 900; ++k) sum[k] += part[k];
        }
        for (int k = 0; k < 900; ++k)
            max_part = std::max(max_part, std::abs(sum[k] - x[k]));
    }

    // tone isolation: on-bin (basis-aligned) tones must leak at most 1% RMS
    // into the other band; bin u covers u * fs / (2n) Hz
    double worst_leak = 0.0;
    {
        const double fs = 30.0;
        const int n = 900;
        const int tone_bins[2] = {60, 180};  // 1 Hz and 3 Hz
        const FrequencyBand homes[2] = {{0.7, 2.0}, {2.0, 4.0}};
        for (int a = 0; a < 2; ++a) {
            std::vector<double> x(n);
            for (int k = 0; k < n; ++k)
                x[k] = std::cos(kPi * (2.0 * k + 1.0) * tone_bins[a] / (2.0 * n));
            Spectrum s = dct2(x, fs);
            double home_rms = 0.0, off_rms = 0.0;
            for (int b = 0; b < 2; ++b) {
                std::vector<double> y = band_filter(s, homes[b]);
                double acc = 0.0;
                for (double v : y) acc += v * v;
                double r = std::sqrt(acc / n);
                if (a == b) home_rms = r; else off_rms = r;
            }
            worst_leak = std::max(worst_leak, off_rms / home_rms);
        }
    }

    double elapsed = timer.seconds();
    bool ok = max_rt < 1e-9 && max_parseval < 1e-9 && max_part < 1e-8 &&
              worst_leak <= 0.01 && elapsed < 30.0;
    report(2, "spectral", ok,
           fmt("roundtrip=%.2e parseval=%.2e partition=%.2e leakage=%.4f%% "
               "runtime=%.1fs",
               max_rt, max_parseval, max_part, 100.0 * worst_leak, elapsed));
}

// ---- criterion 3: gradient checks --------------------------------------------

struct GradScenario {
    std::string name;
    LayerSpec spec;
    int channels;
    int length;
};

double check_layer_gradients(const GradScenario& sc, int trials, uint64_t seed) {
    double worst = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        Rng rng(split_seed(seed, trial));
        ParamStore params;
        init_layer_params(sc.spec, params, rng);
        Tensor1d x(sc.channels, sc.length);
        for (double& v : x.data) v = rng.gaussian();

        ParamStore dparams;
        Tensor1d dx(sc.channels, sc.length);
        auto loss = [&] {
            Tensor1d y = forward_layer(sc.spec, params, x, Mode::Train);
            double acc = 0.0;
            for (size_t i = 0; i < y.data.size(); ++i)
                acc += 0.5 * y.data[i] * y.data[i] * (0.2 + 0.013 * (i % 17));
            return acc;
        };
        auto grads = [&] {
            dparams.fill(0.0);
            LayerCache cache;
            Tensor1d y = forward_layer(sc.spec, params, x, Mode::Train, &cache);
            Tensor1d dy(y.channels, y.length);
            for (size_t i = 0; i < y.data.size(); ++i)
                dy.data[i] = y.data[i] * (0.2 + 0.013 * (i % 17));
            Tensor1d g = backward_layer(sc.spec, params, cache, dy, &dparams);
            std::copy(g.data.begin(), g.data.end(), dx.data.begin());
        };
        grads();

        std::vector<GradCheckGroup> groups;
        groups.push_back({"input", x.data.data(), dx.data.data(), x.data.size()});
        for (auto& e : params.entries) {
            if (!e.learnable) continue;
            groups.push_back({e.name, e.values.data(), dparams.values(e.name).data(),
                              e.values.size()});
        }
        GradCheckReport rep = check_gradients(loss, grads, groups, 4, 1e-6,
                                              split_seed(seed ^ 0xabc, trial));
        worst = std::max(worst, rep.max_rel_error);
    }
    return worst;
}

double check_full_network_gradients(uint64_t seed) {
    SrrnConfig cfg;
    SrrnModel model = make_model(cfg, seed);
    Rng rng(seed + 1);
    StMap raw = make_stmap(cfg.regions, 90, 30.0, ColorSpace::RGB);
    for (double& v : raw.data) v = 110.0 + 8.0 * rng.gaussian();
    StMap pre = temporal_normalize(csc_modified_yuv(raw));
    MultiBandSignal mbs = decompose(pre, cfg.bands, 1);
    Tensor1d input = assemble_input(pre, &mbs, cfg);

    std::vector<double> target(90);
    for (int t = 0; t < 90; ++t) target[t] = std::sin(2.0 * kPi * 1.3 * t / 30.0);

    ParamStore grads_store;
    std::vector<double> dinput(input.data.size(), 0.0);
    auto loss = [&] {
        Tensor1d y = srrn_forward_tensor(model, input, Mode::Train);
        std::vector<double> pred(y.data.begin(), y.data.end());
        return neg_pearson_loss(pred, target).loss;
    };
    auto grads = [&] {
        grads_store.fill(0.0);
        SrrnTape tape;
        Tensor1d y = srrn_forward_tensor(model, input, Mode::Train, &tape);
        std::vector<double> pred(y.data.begin(), y.data.end());
        LossResult lr = neg_pearson_loss(pred, target);
        Tensor1d dy(y.channels, y.length);
        std::copy(lr.grad.begin(), lr.grad.end(), dy.data.begin());
        Tensor1d din = srrn_backward(model, tape, dy, &grads_store);
        std::copy(din.data.begin(), din.data.end(), dinput.begin());
    };
    grads();

    std::vector<GradCheckGroup> groups;
    groups.push_back({"input", input.data.data(), dinput.data(), input.data.size()});
    for (auto& e : model.params.entries) {
        if (!e.learnable) continue;
        groups.push_back({e.name, e.values.data(), grads_store.values(e.name).data(),
                          e.values.size()});
    }
    GradCheckReport rep = check_gradients(loss, grads, groups, 3, 1e-6, seed);
    return rep.max_rel_error;
}

void criterion_gradients() {
    Timer timer;
    std::vector<GradScenario> scenarios = {
        {"conv", conv_spec("c", 3, 5, 3, 1, 1), 3, 12},
        {"conv_strided", conv_spec("cs", 4, 3, 5, 2, 2), 4, 12},
        {"deconv", deconv_spec("d", 3, 4, 3, 3, 0), 3, 5},
        {"batchnorm", bn_spec("bn", 4), 4, 9},
        {"relu", relu_spec(), 3, 11},
        {"elu", elu_spec(), 3, 11},
        {"avgpool", pool_spec(3), 2, 12},
        {"attention", attention_spec(), 5, 6},
    };
    double worst = 0.0;
    std::string worst_name = "none";
    for (size_t i = 0; i < scenarios.size(); ++i) {
        double err = check_layer_gradients(scenarios[i], 100, 9000 + i);
        if (err > worst) {
            worst = err;
            worst_name = scenarios[i].name;
        }
    }
    double full = check_full_network_gradients(31);
    double elapsed = timer.seconds();
    bool ok = worst <= 1e-5 && full <= 1e-5 && elapsed < 300.0;
    report(3, "gradients", ok,
           fmt("primitives max=%.2e (%s, 100 trials each) full-network=%.2e "
               "runtime=%.0fs",
               worst, worst_name.c_str(), full, elapsed));
}

// ---- criterion 4: loss properties ---------------------------------------------

void criterion_loss() {
    std::vector<double> t(120), p(120);
    for (int i = 0; i < 120; ++i) t[i] = std::sin(2.0 * kPi * 1.1 * i / 30.0);

    double at_perfect = neg_pearson_loss(t, t).loss;
    std::vector<double> inv(t.size());
    for (size_t i = 0; i < t.size(); ++i) inv[i] = -t[i];
    double at_inverted = neg_pearson_loss(inv, t).loss;

    Rng rng(77);
    for (size_t i = 0; i < p.size(); ++i) p[i] = t[i] + 0.4 * rng.gaussian();
    double base = neg_pearson_loss(p, t).loss;
    std::vector<double> affine(p.size());
    double max_affine_dev = 0.0;
    for (double scale : {0.5, 3.0, 250.0}) {
        for (double shift : {-40.0, 0.0, 13.0}) {
            for (size_t i = 0; i < p.size(); ++i) affine[i] = scale * p[i] + shift;
            max_affine_dev = std::max(
                max_affine_dev, std::abs(neg_pearson_loss(affine, t).loss - base));
        }
    }

    LossResult lr = neg_pearson_loss(p, t);
    double h = 1e-7, max_grad_err = 0.0;
    for (size_t i = 0; i < p.size(); i += 7) {
        double keep = p[i];
        p[i] = keep + h;
        double up = neg_pearson_loss(p, t).loss;
        p[i] = keep - h;
        double dn = neg_pearson_loss(p, t).loss;
        p[i] = keep;
        double fd = (up - dn) / (2 * h);
        max_grad_err =
            std::max(max_grad_err, std::abs(fd - lr.grad[i]) / std::max(1.0, std::abs(fd)));
    }

    bool ok = std::abs(at_perfect) < 1e-12 && std::abs(at_inverted - 2.0) < 1e-12 &&
              max_affine_dev < 1e-9 && max_grad_err < 1e-6;
    report(4, "loss", ok,
           fmt("perfect=%.1e inverted-2=%.1e affine=%.1e grad=%.1e", at_perfect,
               at_inverted - 2.0, max_affine_dev, max_grad_err));
}

// ---- criterion 5: oversampling contract ---------------------------------------

void criterion_oversampling() {
    HrGroupScheme scheme;
    scheme.group_edges = {50.0, 90.0, 130.0, 170.0};
    scheme.per_group_quota = {3, 2, 1};

    std::vector<double> hrs;
    Rng rng(4242);
    for (int i = 0; i < 70; ++i) hrs.push_back(rng.uniform(50.0, 90.0));
    for (int i = 0; i < 20; ++i) hrs.push_back(rng.uniform(90.0, 130.0));
    for (int i = 0; i < 5; ++i) hrs.push_back(rng.uniform(130.0, 170.0));

    auto batches = make_oversampled_batches(hrs, scheme, 500, 1717);
    bool quotas_ok = batches.size() == 500;
    for (const auto& batch : batches) {
        int counts[3] = {0, 0, 0};
        for (int idx : batch) {
            double hr = hrs[idx];
            counts[hr < 90.0 ? 0 : (hr < 130.0 ? 1 : 2)]++;
        }
        quotas_ok = quotas_ok && counts[0] == 3 && counts[1] == 2 && counts[2] == 1 &&
                    batch.size() == 6;
    }

    auto again = make_oversampled_batches(hrs, scheme, 500, 1717);
    auto other = make_oversampled_batches(hrs, scheme, 500, 1718);
    bool reproducible = (batches == again);
    bool seed_sensitive = (batches != other);

    bool ok = quotas_ok && reproducible && seed_sensitive;
    report(5, "oversampling", ok,
           fmt("quotas=%s repeat=%s seed-sensitive=%s over 500 batches",
               quotas_ok ? "exact" : "violated", reproducible ? "identical" : "drifted",
               seed_sensitive ? "yes" : "no"));
}

// ---- criterion 6: physio oracles ----------------------------------------------

void criterion_physio() {
    double worst_hr_rel = 0.0;
    for (double f : {0.8, 1.2, 2.0, 3.0}) {
        BvpSignal s;
        s.sample_rate = 30.0;
        s.samples.resize(1800);
        for (int k = 0; k < 1800; ++k)
            s.samples[k] = std::sin(2.0 * kPi * f * k / 30.0);
        double hr = estimate_hr(detect_peaks(s));
        worst_hr_rel = std::max(worst_hr_rel, std::abs(hr - 60.0 * f) / (60.0 * f));
    }

    auto modulated = [](double mod_hz) {
        PeakList peaks;
        peaks.sample_rate = 250.0;
        double t = 0.5;
        while (t < 120.0) {
            peaks.indices.push_back(static_cast<int>(std::lround(t * 250.0)));
            t += 0.8 * (1.0 + 0.08 * std::sin(2.0 * kPi * mod_hz * t));
        }
        return peaks;
    };
    double lf = hrv_spectral(modulated(0.1)).lf_nu;
    double hf = hrv_spectral(modulated(0.3)).hf_nu;

    // metric identities on a randomized sample
    Rng rng(99);
    std::vector<double> pred(64), truth(64);
    for (int i = 0; i < 64; ++i) {
        truth[i] = 60.0 + 80.0 * rng.uniform();
        pred[i] = truth[i] + 6.0 * rng.gaussian() + 1.5;
    }
    MetricReport m = metrics(pred, truth);
    double bias = 0.0;
    for (int i = 0; i < 64; ++i) bias += (pred[i] - truth[i]) / 64.0;
    double decomposition_gap =
        std::abs(m.rmse * m.rmse - (bias * bias + m.std_dev * m.std_dev));
    bool identities = (m.rmse >= m.mae) && decomposition_gap < 1e-9;

    bool ok = worst_hr_rel < 0.01 && lf >= 0.9 && hf >= 0.9 && identities;
    report(6, "physio", ok,
           fmt("hr_rel=%.4f lf_nu=%.3f hf_nu=%.3f rmse_decomp_gap=%.1e", worst_hr_rel,
               lf, hf, decomposition_gap));
}

// ---- criteria 7-9: end-to-end training, baselines, ablation --------------------

struct EndToEnd {
    std::vector<TrainSample> train_corpus;
    std::vector<TrainSample> held_out_30s;
    std::vector<TrainSample> held_out_15s;
    std::vector<TrainSample> noiseless_30s;
    std::vector<TrainSample> noisy_30s;
    SrrnModel model{SrrnConfig{}, ParamStore{}};
    SrrnModel ablated{SrrnConfig{}, ParamStore{}};
    double train_seconds = 0.0;
    double ablation_seconds = 0.0;
};

std::vector<TrainSample> make_clips(int count, double seconds, double noise,
                                    uint64_t seed) {
    SynthSpec spec;
    spec.count = count;
    spec.clip_seconds = seconds;
    spec.noise_sigma = noise;
    spec.hr_lo = 50.0;
    spec.hr_hi = 150.0;
    spec.seed = seed;
    spec.validate();
    std::vector<TrainSample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Rng clip_rng(split_seed(seed, i));
        double hr = clip_rng.uniform(spec.hr_lo, spec.hr_hi);
        char id[32];
        std::snprintf(id, sizeof(id), "clip_%03d", i);
        out.push_back(synth_sample(spec, hr, id, clip_rng.next_u64()));
    }
    return out;
}

double corpus_model_mae(const SrrnModel& model, const std::vector<TrainSample>& clips,
                        double* r_out = nullptr) {
    std::vector<double> pred, truth;
    for (const auto& clip : clips) {
        InferResult res = infer_bvp(model, clip.map, 1, false);
        pred.push_back(res.report.hr);
        truth.push_back(clip.reference_hr);
    }
    MetricReport m = metrics(pred, truth);
    if (r_out) *r_out = m.r;
    return m.mae;
}

double corpus_green_mae(const std::vector<TrainSample>& clips) {
    std::vector<double> pred, truth;
    for (const auto& clip : clips) {
        BvpSignal g = baseline_extract(clip.map, BaselineMethod::Green);
        pred.push_back(estimate_hr(detect_peaks(g)));
        truth.push_back(clip.reference_hr);
    }
    return metrics(pred, truth).mae;
}

double corpus_chrom_mae(const std::vector<TrainSample>& clips) {
    std::vector<double> pred, truth;
    for (const auto& clip : clips) {
        BvpSignal c = baseline_extract(clip.map, BaselineMethod::Chrom);
        pred.push_back(estimate_hr(detect_peaks(c)));
        truth.push_back(clip.reference_hr);
    }
    return metrics(pred, truth).mae;
}

void run_end_to_end(EndToEnd& world) {
    world.train_corpus = make_clips(200, 30.0, 0.1, 20260501);
    world.held_out_30s = make_clips(50, 30.0, 0.1, 20260777);
    world.held_out_15s = make_clips(50, 15.0, 0.1, 20260778);
    world.noiseless_30s = make_clips(50, 30.0, 0.0, 20260779);
    world.noisy_30s = make_clips(50, 30.0, 0.3, 20260780);

    TrainConfig cfg;  // shipping defaults: the two-phase schedule as configured
    cfg.seed = 1;

    Timer t1;
    world.model = make_model(SrrnConfig{}, 1);
    fit(world.train_corpus, world.model, cfg, 1);
    world.train_seconds = t1.seconds();

    Timer t2;
    SrrnConfig ablated_cfg;
    ablated_cfg.bands.clear();  // decompose disabled: map-only input
    world.ablated = make_model(ablated_cfg, 1);
    fit(world.train_corpus, world.ablated, cfg, 1);
    world.ablation_seconds = t2.seconds();
}

void criterion_end_to_end(const EndToEnd& world) {
    double r30 = 0.0;
    double mae30 = corpus_model_mae(world.model, world.held_out_30s, &r30);
    double mae15 = corpus_model_mae(world.model, world.held_out_15s);
    double total = world.train_seconds;
    bool ok = mae30 <= 2.0 && r30 >= 0.95 && mae15 <= 3.0 && total <= 1800.0;
    report(7, "end-to-end", ok,
           fmt("held-out 30s: mae=%.3f r=%.4f | 15s: mae=%.3f | train=%.0fs", mae30,
               r30, mae15, total));
}

void criterion_baselines(const EndToEnd& world) {
    double green_clean = corpus_green_mae(world.noiseless_30s);
    double chrom_clean = corpus_chrom_mae(world.noiseless_30s);
    double green_noisy = corpus_green_mae(world.noisy_30s);
    double model_noisy = corpus_model_mae(world.model, world.noisy_30s);
    bool ok = green_clean <= 1.0 && chrom_clean <= 1.0 && model_noisy < green_noisy;
    report(8, "baselines", ok,
           fmt("clean green=%.3f chrom=%.3f | sigma0.3 model=%.3f green=%.3f",
               green_clean, chrom_clean, model_noisy, green_noisy));
}

void criterion_ablation(const EndToEnd& world) {
    // The decompose stage's contribution is noise rejection, so the ordering
    // is asserted on the noisy held-out corpus; in-distribution the two
    // models saturate within run-to-run jitter of each other.
    double full = corpus_model_mae(world.model, world.noisy_30s);
    double ablated = corpus_model_mae(world.ablated, world.noisy_30s);
    bool ok = ablated > full;
    report(9, "ablation", ok,
           fmt("noisy held-out (sigma 0.3): full mae=%.3f map-only mae=%.3f "
               "(same seed/schedule)",
               full, ablated));
}

}  // namespace

int main() {
    Timer total;
    criterion_budget();
    criterion_spectral();
    criterion_gradients();
    criterion_loss();
    criterion_oversampling();
    criterion_physio();

    EndToEnd world;
    run_end_to_end(world);
    criterion_end_to_end(world);
    criterion_baselines(world);
    criterion_ablation(world);

    std::printf("%d/9 criteria passed in %.0fs\n", 9 - g_failures, total.seconds());
    return g_failures == 0 ? 0 : 1;
}
