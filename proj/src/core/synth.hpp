#pragma once

#include <string>
#include <vector>

#include "core/train.hpp"

namespace fastbvp {

// Generator settings for synthetic pulse clips. Each clip embeds a
// frequency-modulated multi-harmonic pulse into per-region RGB traces with
// slow sinusoidal drift and optional white sensor noise.
struct SynthSpec {
    double hr_lo = 50.0;           // bpm, sampled uniformly per clip
    double hr_hi = 150.0;
    double hrv_mod_freq = 0.1;     // Hz, instantaneous-rate modulation
    double hrv_mod_depth = 0.02;   // relative frequency swing
    std::vector<double> harmonics = {1.0, 0.4, 0.15};
    double drift_amplitude = 2.0;  // pixel units
    double drift_timescale = 3.5;  // seconds per drift cycle (jittered 20%);
                                   // respiration-scale modulation below the band
    double noise_sigma = 0.0;      // pixel units
    double clip_seconds = 30.0;
    double sample_rate = 30.0;
    int count = 200;
    uint64_t seed = 1;
    int regions = 4;

    int frames() const;
    void validate() const;
};

SynthSpec parse_synth_spec_json(const std::string& text, const std::string& origin);
std::string synth_spec_to_json(const SynthSpec& spec);

// Unit-scale pulse waveform: the instantaneous rate hr/60 is modulated by
// hrv_mod sine, the phase integrated sample by sample, and the listed
// harmonics summed. Random initial/modulation phases come from `seed`.
BvpSignal synth_bvp(const SynthSpec& spec, double hr, uint64_t seed);

// One full sample: map plus ground-truth waveform and HR. The same seed
// always produces identical bytes.
TrainSample synth_sample(const SynthSpec& spec, double hr, const std::string& id,
                         uint64_t seed);

// Writes `<id>.csv` + `<id>.truth.json` per clip plus a manifest.json into
// `out_dir` (created if missing). Per-clip HR is drawn from [hr_lo, hr_hi).
// Returns the generated samples in manifest order.
std::vector<TrainSample> build_corpus(const SynthSpec& spec, const std::string& out_dir);

}  // namespace fastbvp
