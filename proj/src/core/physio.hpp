#pragma once

#include <string>
#include <vector>

#include "core/srrn.hpp"
#include "core/stmap.hpp"

namespace fastbvp {

struct PeakList {
    std::vector<int> indices;  // strictly increasing sample indices
    double sample_rate = 0.0;
};

// Local maxima above an adaptive threshold (the 60th percentile of the
// samples inside a sliding 2 s window), at least 0.25 s apart, keeping the
// higher peak on conflicts. Raises when fewer than two peaks survive.
PeakList detect_peaks(const BvpSignal& bvp);

// 60 / mean inter-beat interval in seconds.
double estimate_hr(const PeakList& peaks);

struct HrvReport {
    double lf_nu = 0.0;
    double hf_nu = 0.0;
    double lf_hf_ratio = 0.0;
    bool short_clip_warning = false;  // set when the peak span is under 30 s
};

// IBI series resampled to 4 Hz by linear interpolation, Hann-windowed
// periodogram, LF = [0.04, 0.15) Hz, HF = [0.15, 0.40) Hz, both reported in
// normalized units. Constant IBI series raise a degenerate-signal error.
HrvReport hrv_spectral(const PeakList& peaks);

struct MetricReport {
    double mae = 0.0;
    double rmse = 0.0;
    double std_dev = 0.0;  // population std of (pred - true)
    double r = 0.0;
};

MetricReport metrics(const std::vector<double>& pred_hr,
                     const std::vector<double>& true_hr);

enum class BaselineMethod { Green, Chrom, Pos };

const char* baseline_method_name(BaselineMethod method);
BaselineMethod baseline_method_from_name(const std::string& name);

// Classic signal-model extractors on the raw RGB map; every method's output
// is band-passed to [0.7, 4.0] Hz.
BvpSignal baseline_extract(const StMap& map, BaselineMethod method);

struct PhysioReport {
    double hr = 0.0;
    bool hr_unstable = false;    // IBI coefficient of variation above 0.2
    int peak_count = 0;
    double duration_seconds = 0.0;
    bool hrv_warning = false;    // clip shorter than 30 s: HRV is unreliable
    bool hrv_defined = false;
    HrvReport hrv;
};

// Full waveform-to-report path; HRV degeneracy is captured in hrv_defined
// instead of escaping as an error.
PhysioReport physio_report(const BvpSignal& bvp);

// Flat JSON object: hr, hr_unstable, peak_count, duration_seconds,
// hrv_warning, lf_nu, hf_nu, lf_hf_ratio (nulls when HRV is undefined).
std::string physio_report_to_json(const PhysioReport& report);

}  // namespace fastbvp
