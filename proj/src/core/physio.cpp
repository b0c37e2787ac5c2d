#include "core/physio.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include <json.hpp>

#include "core/common.hpp"
#include "core/spectral.hpp"

namespace fastbvp {
namespace {

void require(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond) raise(code, msg);
}

// Nearest-rank percentile: the ceil(p * n)-th smallest value (1-based).
double percentile(std::vector<double>& scratch, double p) {
    std::sort(scratch.begin(), scratch.end());
    int n = static_cast<int>(scratch.size());
    int rank = static_cast<int>(std::ceil(p * n - 1e-9));
    rank = std::clamp(rank, 1, n);
    return scratch[rank - 1];
}

std::vector<double> ibis_of(const PeakList& peaks) {
    std::vector<double> out;
    out.reserve(peaks.indices.size() - 1);
    for (size_t k = 0; k + 1 < peaks.indices.size(); ++k)
        out.push_back((peaks.indices[k + 1] - peaks.indices[k]) / peaks.sample_rate);
    return out;
}

void check_peaklist(const PeakList& peaks, size_t min_count) {
    require(peaks.sample_rate > 0.0, ErrorCode::Argument, "sample rate must be positive");
    require(peaks.indices.size() >= min_count, ErrorCode::Insufficient,
            "need at least " + std::to_string(min_count) + " peaks");
    for (size_t k = 0; k + 1 < peaks.indices.size(); ++k)
        require(peaks.indices[k] < peaks.indices[k + 1], ErrorCode::Argument,
                "peak indices must be strictly increasing");
    require(peaks.indices.front() >= 0, ErrorCode::Argument, "negative peak index");
}

std::vector<double> bandpass_pulse(const std::vector<double>& x, double fs) {
    Spectrum spec = dct2(x, fs);
    return band_filter(spec, FrequencyBand{0.7, 4.0});
}

std::vector<double> channel_mean(const StMap& map, int channel) {
    std::vector<double> out(map.frames, 0.0);
    for (int i = 0; i < map.regions; ++i)
        for (int t = 0; t < map.frames; ++t) out[t] += map.at(i, channel, t);
    for (double& v : out) v /= map.regions;
    return out;
}

}  // namespace

PeakList detect_peaks(const BvpSignal& bvp) {
    require(bvp.sample_rate > 0.0, ErrorCode::Argument, "sample rate must be positive");
    int n = static_cast<int>(bvp.samples.size());
    require(n >= 3, ErrorCode::Insufficient, "waveform too short for peak detection");
    require(all_finite(bvp.samples), ErrorCode::Data, "waveform contains non-finite samples");

    const std::vector<double>& s = bvp.samples;
    int half = std::max(1, static_cast<int>(std::lround(bvp.sample_rate)));
    int gap = std::max(1, static_cast<int>(std::lround(0.25 * bvp.sample_rate)));

    // Local maxima above the 60th percentile of a centered 2 s neighborhood.
    // A run of equal samples counts as one maximum at its midpoint, so a peak
    // landing exactly between two samples is still detected.
    std::vector<int> candidates;
    std::vector<double> window;
    for (int i = 1; i + 1 < n;) {
        if (!(s[i] > s[i - 1])) {
            ++i;
            continue;
        }
        int j = i;
        while (j + 1 < n && s[j + 1] == s[i]) ++j;
        if (j + 1 < n && s[j] > s[j + 1]) {
            int p = (i + j) / 2;
            int lo = std::max(0, p - half);
            int hi = std::min(n - 1, p + half);
            window.assign(s.begin() + lo, s.begin() + hi + 1);
            if (s[p] > percentile(window, 0.6)) candidates.push_back(p);
        }
        i = j + 1;
    }

    // Enforce the refractory gap greedily, keeping the taller peak.
    std::vector<int> order = candidates;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (s[a] != s[b]) return s[a] > s[b];
        return a < b;
    });
    std::vector<int> accepted;
    for (int c : order) {
        bool clear = true;
        for (int a : accepted) {
            if (std::abs(c - a) < gap) {
                clear = false;
                break;
            }
        }
        if (clear) accepted.push_back(c);
    }
    std::sort(accepted.begin(), accepted.end());
    require(accepted.size() >= 2, ErrorCode::Insufficient, "fewer than two peaks detected");
    return PeakList{accepted, bvp.sample_rate};
}

double estimate_hr(const PeakList& peaks) {
    check_peaklist(peaks, 2);
    double mean_ibi = mean_of(ibis_of(peaks));
    return 60.0 / mean_ibi;
}

HrvReport hrv_spectral(const PeakList& peaks) {
    check_peaklist(peaks, 3);
    std::vector<double> ibis = ibis_of(peaks);
    require(population_std(ibis) > 1e-12, ErrorCode::Degenerate,
            "constant inter-beat intervals");

    // Each interval is stamped at its closing peak, then resampled to a 4 Hz
    // grid by linear interpolation.
    std::vector<double> times(ibis.size());
    for (size_t k = 0; k < ibis.size(); ++k)
        times[k] = peaks.indices[k + 1] / peaks.sample_rate;

    const double grid_fs = 4.0;
    double t0 = times.front();
    double t1 = times.back();
    int m = static_cast<int>(std::floor((t1 - t0) * grid_fs)) + 1;
    require(m >= 8, ErrorCode::Insufficient, "inter-beat series spans too little time");

    std::vector<double> x(m);
    size_t seg = 0;
    for (int j = 0; j < m; ++j) {
        double t = t0 + j / grid_fs;
        while (seg + 2 < times.size() && times[seg + 1] <= t) ++seg;
        double span = times[seg + 1] - times[seg];
        double w = (t - times[seg]) / span;
        w = std::clamp(w, 0.0, 1.0);
        x[j] = ibis[seg] * (1.0 - w) + ibis[seg + 1] * w;
    }

    double mean = mean_of(x);
    for (int j = 0; j < m; ++j) {
        double hann = 0.5 * (1.0 - std::cos(2.0 * M_PI * j / (m - 1)));
        x[j] = (x[j] - mean) * hann;
    }

    // Periodogram over the positive bins; LF = [0.04, 0.15), HF = [0.15, 0.40).
    double lf = 0.0, hf = 0.0;
    int lf_bins = 0, hf_bins = 0;
    for (int k = 1; k <= m / 2; ++k) {
        double freq = k * grid_fs / m;
        bool in_lf = freq >= 0.04 && freq < 0.15;
        bool in_hf = freq >= 0.15 && freq < 0.40;
        if (!in_lf && !in_hf) continue;
        double re = 0.0, im = 0.0;
        for (int j = 0; j < m; ++j) {
            double ang = 2.0 * M_PI * k * j / m;
            re += x[j] * std::cos(ang);
            im -= x[j] * std::sin(ang);
        }
        double power = re * re + im * im;
        if (in_lf) {
            lf += power;
            ++lf_bins;
        } else {
            hf += power;
            ++hf_bins;
        }
    }
    require(lf_bins > 0 && hf_bins > 0, ErrorCode::Insufficient,
            "inter-beat series too short to resolve the LF band");
    double total = lf + hf;
    require(std::isfinite(total) && total > 0.0, ErrorCode::Degenerate,
            "no spectral power in the LF/HF bands");

    HrvReport report;
    report.lf_nu = lf / total;
    report.hf_nu = hf / total;
    report.lf_hf_ratio = hf > 0.0 ? lf / hf : std::numeric_limits<double>::infinity();
    double span_all = (peaks.indices.back() - peaks.indices.front()) / peaks.sample_rate;
    report.short_clip_warning = span_all < 30.0;
    return report;
}

MetricReport metrics(const std::vector<double>& pred_hr, const std::vector<double>& true_hr) {
    require(pred_hr.size() == true_hr.size(), ErrorCode::Shape,
            "prediction/reference length mismatch");
    require(pred_hr.size() >= 2, ErrorCode::Insufficient, "need at least two pairs");
    require(all_finite(pred_hr) && all_finite(true_hr), ErrorCode::Data,
            "non-finite heart-rate value");

    std::vector<double> err(pred_hr.size());
    double abs_sum = 0.0, sq_sum = 0.0;
    for (size_t i = 0; i < pred_hr.size(); ++i) {
        err[i] = pred_hr[i] - true_hr[i];
        abs_sum += std::abs(err[i]);
        sq_sum += err[i] * err[i];
    }
    MetricReport report;
    report.mae = abs_sum / err.size();
    report.rmse = std::sqrt(sq_sum / err.size());
    report.std_dev = population_std(err);
    try {
        report.r = pearson(pred_hr, true_hr);
    } catch (const Error& e) {
        // A constant series has no defined correlation; report zero so the
        // summary row still prints (the error metrics remain meaningful).
        if (e.code() != ErrorCode::Degenerate) throw;
        report.r = 0.0;
    }
    return report;
}

const char* baseline_method_name(BaselineMethod method) {
    switch (method) {
        case BaselineMethod::Green: return "green";
        case BaselineMethod::Chrom: return "chrom";
        case BaselineMethod::Pos: return "pos";
    }
    raise(ErrorCode::Internal, "unknown baseline method");
}

BaselineMethod baseline_method_from_name(const std::string& name) {
    if (name == "green") return BaselineMethod::Green;
    if (name == "chrom") return BaselineMethod::Chrom;
    if (name == "pos") return BaselineMethod::Pos;
    raise(ErrorCode::Argument, "unknown baseline method '" + name + "'");
}

BvpSignal baseline_extract(const StMap& map, BaselineMethod method) {
    require(map.color_space == ColorSpace::RGB, ErrorCode::State,
            "baseline methods operate on raw RGB maps");
    require(map.frames >= 2, ErrorCode::Argument, "map too short");
    require(map.sample_rate >= 8.0, ErrorCode::Argument,
            "sample rate below 8 Hz cannot cover the 0.7-4 Hz pulse band");

    int n = map.frames;
    double fs = map.sample_rate;
    std::vector<double> red = channel_mean(map, 0);
    std::vector<double> green = channel_mean(map, 1);
    std::vector<double> blue = channel_mean(map, 2);

    BvpSignal out;
    out.sample_rate = fs;

    switch (method) {
        case BaselineMethod::Green: {
            double m = mean_of(green);
            std::vector<double> g = green;
            for (double& v : g) v -= m;
            out.samples = bandpass_pulse(g, fs);
            return out;
        }
        case BaselineMethod::Chrom: {
            double mr = mean_of(red), mg = mean_of(green), mb = mean_of(blue);
            require(mr > 1e-12 && mg > 1e-12 && mb > 1e-12, ErrorCode::Data,
                    "channel mean too small to normalize");
            std::vector<double> xs(n), ys(n);
            for (int t = 0; t < n; ++t) {
                double rn = red[t] / mr, gn = green[t] / mg, bn = blue[t] / mb;
                xs[t] = 3.0 * rn - 2.0 * gn;
                ys[t] = 1.5 * rn + gn - 1.5 * bn;
            }
            std::vector<double> xf = bandpass_pulse(xs, fs);
            std::vector<double> yf = bandpass_pulse(ys, fs);
            double sy = population_std(yf);
            double alpha = sy > 1e-12 ? population_std(xf) / sy : 0.0;
            out.samples.resize(n);
            for (int t = 0; t < n; ++t) out.samples[t] = xf[t] - alpha * yf[t];
            return out;
        }
        case BaselineMethod::Pos: {
            int w = std::max(2, static_cast<int>(std::lround(1.6 * fs)));
            require(n >= w, ErrorCode::Insufficient,
                    "clip shorter than the 1.6 s analysis window");
            std::vector<double> h(n, 0.0);
            std::vector<double> s1(w), s2(w);
            for (int start = 0; start + w <= n; ++start) {
                double mr = 0.0, mg = 0.0, mb = 0.0;
                for (int j = 0; j < w; ++j) {
                    mr += red[start + j];
                    mg += green[start + j];
                    mb += blue[start + j];
                }
                mr /= w;
                mg /= w;
                mb /= w;
                require(mr > 1e-12 && mg > 1e-12 && mb > 1e-12, ErrorCode::Data,
                        "channel mean too small to normalize");
                for (int j = 0; j < w; ++j) {
                    double rn = red[start + j] / mr;
                    double gn = green[start + j] / mg;
                    double bn = blue[start + j] / mb;
                    s1[j] = gn - bn;
                    s2[j] = gn + bn - 2.0 * rn;
                }
                double sigma2 = population_std(s2);
                double scale = sigma2 > 1e-12 ? population_std(s1) / sigma2 : 0.0;
                double wm = 0.0;
                for (int j = 0; j < w; ++j) {
                    s1[j] += scale * s2[j];
                    wm += s1[j];
                }
                wm /= w;
                for (int j = 0; j < w; ++j) h[start + j] += s1[j] - wm;
            }
            out.samples = bandpass_pulse(h, fs);
            return out;
        }
    }
    raise(ErrorCode::Internal, "unknown baseline method");
}

PhysioReport physio_report(const BvpSignal& bvp) {
    PeakList peaks = detect_peaks(bvp);
    PhysioReport report;
    report.hr = estimate_hr(peaks);
    report.peak_count = static_cast<int>(peaks.indices.size());
    report.duration_seconds = bvp.samples.size() / bvp.sample_rate;
    report.hrv_warning = report.duration_seconds < 30.0;

    std::vector<double> ibis = ibis_of(peaks);
    double mean_ibi = mean_of(ibis);
    report.hr_unstable = population_std(ibis) / mean_ibi > 0.2;

    try {
        report.hrv = hrv_spectral(peaks);
        report.hrv_defined = true;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::Insufficient && e.code() != ErrorCode::Degenerate) throw;
        report.hrv_defined = false;
    }
    return report;
}

std::string physio_report_to_json(const PhysioReport& report) {
    nlohmann::ordered_json j;
    j["hr"] = report.hr;
    j["hr_unstable"] = report.hr_unstable;
    j["peak_count"] = report.peak_count;
    j["duration_seconds"] = report.duration_seconds;
    j["hrv_warning"] = report.hrv_warning;
    if (report.hrv_defined) {
        j["lf_nu"] = report.hrv.lf_nu;
        j["hf_nu"] = report.hrv.hf_nu;
        j["lf_hf_ratio"] = report.hrv.lf_hf_ratio;
    } else {
        j["lf_nu"] = nullptr;
        j["hf_nu"] = nullptr;
        j["lf_hf_ratio"] = nullptr;
    }
    return j.dump(2);
}

}  // namespace fastbvp
