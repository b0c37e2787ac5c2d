#include "core/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include <json.hpp>

namespace fastbvp {
namespace {

void require(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond) raise(code, msg);
}

constexpr double kBaseline[3] = {110.0, 120.0, 100.0};     // R, G, B rest level
constexpr double kChannelGain[3] = {0.3, 1.0, 0.6};        // pulse strength per channel
constexpr double kPulseAmplitude = 0.35;                   // pixel units on G
constexpr double kRegionGain[4] = {1.0, 0.9, 1.1, 0.8};    // cycled past 4 regions

double region_gain(int region) { return kRegionGain[region % 4]; }

BvpSignal synth_bvp_with(const SynthSpec& spec, double hr, Rng& rng) {
    int frames = spec.frames();
    double fs = spec.sample_rate;
    double f0 = hr / 60.0;
    double phase0 = rng.uniform();
    double mod_phase = rng.uniform() * 2.0 * M_PI;

    BvpSignal out;
    out.sample_rate = fs;
    out.samples.resize(frames);
    double phase = phase0;
    for (int t = 0; t < frames; ++t) {
        if (t > 0) {
            double t_prev = (t - 1) / fs;
            double inst = f0 * (1.0 + spec.hrv_mod_depth *
                                          std::sin(2.0 * M_PI * spec.hrv_mod_freq * t_prev +
                                                   mod_phase));
            phase += inst / fs;
        }
        double v = 0.0;
        for (size_t k = 0; k < spec.harmonics.size(); ++k) {
            v += spec.harmonics[k] * std::cos(2.0 * M_PI * (k + 1) * phase);
        }
        out.samples[t] = v;
    }
    return out;
}

nlohmann::json spec_to_json_obj(const SynthSpec& s) {
    nlohmann::json j;
    j["hr_lo"] = s.hr_lo;
    j["hr_hi"] = s.hr_hi;
    j["hrv_mod_freq"] = s.hrv_mod_freq;
    j["hrv_mod_depth"] = s.hrv_mod_depth;
    j["harmonics"] = s.harmonics;
    j["drift_amplitude"] = s.drift_amplitude;
    j["drift_timescale"] = s.drift_timescale;
    j["noise_sigma"] = s.noise_sigma;
    j["clip_seconds"] = s.clip_seconds;
    j["sample_rate"] = s.sample_rate;
    j["count"] = s.count;
    j["seed"] = s.seed;
    j["regions"] = s.regions;
    return j;
}

SynthSpec spec_from_json_obj(const nlohmann::json& j, const std::string& origin) {
    if (!j.is_object()) raise(ErrorCode::Schema, origin + ": spec must be a JSON object");
    static const char* known[] = {"hr_lo",         "hr_hi",          "hrv_mod_freq",
                                  "hrv_mod_depth", "harmonics",      "drift_amplitude",
                                  "drift_timescale", "noise_sigma",  "clip_seconds",
                                  "sample_rate",   "count",          "seed",
                                  "regions"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || (it.key() == k);
        if (!ok) raise(ErrorCode::Schema, origin + ": unknown spec key '" + it.key() + "'");
    }
    SynthSpec s;
    auto read_double = [&](const char* key, double& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number()) {
            raise(ErrorCode::Schema, origin + ": '" + std::string(key) + "' must be a number");
        }
        out = j[key].get<double>();
    };
    read_double("hr_lo", s.hr_lo);
    read_double("hr_hi", s.hr_hi);
    read_double("hrv_mod_freq", s.hrv_mod_freq);
    read_double("hrv_mod_depth", s.hrv_mod_depth);
    if (j.contains("harmonics")) {
        if (!j["harmonics"].is_array()) {
            raise(ErrorCode::Schema, origin + ": 'harmonics' must be an array");
        }
        s.harmonics.clear();
        for (const auto& v : j["harmonics"]) {
            if (!v.is_number()) {
                raise(ErrorCode::Schema, origin + ": 'harmonics' must contain numbers");
            }
            s.harmonics.push_back(v.get<double>());
        }
    }
    read_double("drift_amplitude", s.drift_amplitude);
    read_double("drift_timescale", s.drift_timescale);
    read_double("noise_sigma", s.noise_sigma);
    read_double("clip_seconds", s.clip_seconds);
    read_double("sample_rate", s.sample_rate);
    if (j.contains("count")) {
        if (!j["count"].is_number_integer()) {
            raise(ErrorCode::Schema, origin + ": 'count' must be an integer");
        }
        s.count = j["count"].get<int>();
    }
    if (j.contains("seed")) {
        if (!j["seed"].is_number_integer()) {
            raise(ErrorCode::Schema, origin + ": 'seed' must be an integer");
        }
        s.seed = j["seed"].get<uint64_t>();
    }
    if (j.contains("regions")) {
        if (!j["regions"].is_number_integer()) {
            raise(ErrorCode::Schema, origin + ": 'regions' must be an integer");
        }
        s.regions = j["regions"].get<int>();
    }
    s.validate();
    return s;
}

}  // namespace

int SynthSpec::frames() const {
    return static_cast<int>(std::lround(clip_seconds * sample_rate));
}

void SynthSpec::validate() const {
    require(hr_lo >= 40.0 && hr_lo < hr_hi && hr_hi <= 240.0, ErrorCode::Config,
            "HR range must satisfy 40 <= lo < hi <= 240");
    require(hrv_mod_freq >= 0.0, ErrorCode::Config, "modulation frequency must be >= 0");
    require(hrv_mod_depth >= 0.0 && hrv_mod_depth <= 0.5, ErrorCode::Config,
            "modulation depth must lie in [0, 0.5]");
    require(!harmonics.empty() && harmonics[0] > 0.0, ErrorCode::Config,
            "harmonics need a positive fundamental");
    require(all_finite(harmonics), ErrorCode::Config, "harmonics must be finite");
    require(drift_amplitude >= 0.0, ErrorCode::Config, "drift amplitude must be >= 0");
    // 20% jitter on 1/timescale must stay below the 0.7 Hz pulse-band floor
    require(drift_timescale >= 2.0, ErrorCode::Config,
            "drift timescale must be >= 2 s so drift stays below the pulse band");
    require(noise_sigma >= 0.0, ErrorCode::Config, "noise sigma must be >= 0");
    require(clip_seconds >= 2.0, ErrorCode::Config, "clips must be at least 2 s long");
    require(sample_rate > 0.0, ErrorCode::Config, "sample rate must be positive");
    require(count >= 1, ErrorCode::Config, "count must be >= 1");
    require(regions >= 1, ErrorCode::Config, "regions must be >= 1");
}

SynthSpec parse_synth_spec_json(const std::string& text, const std::string& origin) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::Schema, origin + ": invalid JSON: " + e.what());
    }
    return spec_from_json_obj(j, origin);
}

std::string synth_spec_to_json(const SynthSpec& spec) {
    return spec_to_json_obj(spec).dump(2);
}

BvpSignal synth_bvp(const SynthSpec& spec, double hr, uint64_t seed) {
    spec.validate();
    require(hr >= 40.0 && hr <= 240.0, ErrorCode::Argument, "HR outside 40-240 bpm");
    Rng rng(seed);
    return synth_bvp_with(spec, hr, rng);
}

TrainSample synth_sample(const SynthSpec& spec, double hr, const std::string& id,
                         uint64_t seed) {
    spec.validate();
    require(hr >= 40.0 && hr <= 240.0, ErrorCode::Argument, "HR outside 40-240 bpm");
    int frames = spec.frames();
    double fs = spec.sample_rate;

    Rng rng(seed);
    BvpSignal bvp = synth_bvp_with(spec, hr, rng);

    // Slow per-trace drift: frequency jittered 20% around 1/timescale,
    // amplitude scaled from [0.5, 1), random phase. Draws happen in a fixed
    // (region, channel) order so output is reproducible byte for byte.
    int traces = spec.regions * 3;
    std::vector<double> drift_freq(traces), drift_amp(traces), drift_phase(traces);
    for (int k = 0; k < traces; ++k) {
        drift_freq[k] = (1.0 / spec.drift_timescale) * (1.0 + rng.uniform(-0.2, 0.2));
        drift_amp[k] = spec.drift_amplitude * rng.uniform(0.5, 1.0);
        drift_phase[k] = rng.uniform(0.0, 2.0 * M_PI);
    }

    StMap map = make_stmap(spec.regions, frames, fs, ColorSpace::RGB);
    for (int i = 0; i < spec.regions; ++i) {
        for (int c = 0; c < 3; ++c) {
            int k = i * 3 + c;
            for (int t = 0; t < frames; ++t) {
                double sec = t / fs;
                double v = kBaseline[c] +
                           kPulseAmplitude * kChannelGain[c] * region_gain(i) *
                               bvp.samples[t] +
                           drift_amp[k] *
                               std::sin(2.0 * M_PI * drift_freq[k] * sec + drift_phase[k]);
                map.at(i, c, t) = v;
            }
        }
    }
    if (spec.noise_sigma > 0.0) {
        for (int i = 0; i < spec.regions; ++i) {
            for (int c = 0; c < 3; ++c) {
                for (int t = 0; t < frames; ++t) {
                    map.at(i, c, t) += rng.gaussian() * spec.noise_sigma;
                }
            }
        }
    }
    for (double& v : map.data) v = std::clamp(v, 0.0, 255.0);

    TrainSample sample;
    sample.id = id;
    sample.map = std::move(map);
    sample.target_bvp = std::move(bvp);
    sample.reference_hr = hr;
    validate_sample(sample);
    return sample;
}

std::vector<TrainSample> build_corpus(const SynthSpec& spec, const std::string& out_dir) {
    spec.validate();
    std::filesystem::path dir(out_dir);

    std::vector<TrainSample> samples;
    samples.reserve(spec.count);
    nlohmann::json clips = nlohmann::json::array();
    for (int i = 0; i < spec.count; ++i) {
        char id_buf[32];
        std::snprintf(id_buf, sizeof(id_buf), "clip_%03d", i);
        std::string id(id_buf);

        Rng clip_rng(split_seed(spec.seed, static_cast<uint64_t>(i)));
        double hr = clip_rng.uniform(spec.hr_lo, spec.hr_hi);
        TrainSample sample = synth_sample(spec, hr, id, clip_rng.next_u64());

        write_text_file((dir / (id + ".csv")).string(), stmap_to_csv(sample.map));

        nlohmann::ordered_json truth;
        truth["id"] = id;
        truth["hr"] = hr;
        truth["sample_rate"] = spec.sample_rate;
        truth["frames"] = sample.map.frames;
        truth["bvp"] = sample.target_bvp.samples;
        write_text_file((dir / (id + ".truth.json")).string(), truth.dump(2));

        clips.push_back({{"id", id}, {"hr", hr}});
        samples.push_back(std::move(sample));
    }

    nlohmann::ordered_json manifest;
    manifest["spec"] = spec_to_json_obj(spec);
    manifest["clips"] = clips;
    write_text_file((dir / "manifest.json").string(), manifest.dump(2));
    return samples;
}

}  // namespace fastbvp
