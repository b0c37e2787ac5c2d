#include "core/pipeline.hpp"

#include <cmath>
#include <filesystem>

#include <json.hpp>

namespace fastbvp {
namespace {

void require(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond) raise(code, msg);
}

// HR estimate for one waveform; failures that mean "no usable pulse" become
// a 0 bpm prediction so they punish the metric instead of aborting the run.
double hr_or_penalty(const std::function<BvpSignal()>& produce) {
    try {
        BvpSignal bvp = produce();
        require(all_finite(bvp.samples), ErrorCode::Data, "non-finite waveform");
        return estimate_hr(detect_peaks(bvp));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Insufficient || e.code() == ErrorCode::Degenerate ||
            e.code() == ErrorCode::Data) {
            return 0.0;
        }
        throw;
    }
}

}  // namespace

std::vector<TrainSample> load_corpus(const std::string& dir) {
    std::filesystem::path root(dir);
    std::string manifest_path = (root / "manifest.json").string();
    std::string text = read_text_file(manifest_path);

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::Schema, manifest_path + ": invalid JSON: " + e.what());
    }
    require(j.is_object() && j.contains("spec") && j.contains("clips"), ErrorCode::Schema,
            manifest_path + ": expected 'spec' and 'clips' keys");
    SynthSpec spec = parse_synth_spec_json(j["spec"].dump(), manifest_path + ": spec");
    require(j["clips"].is_array() && !j["clips"].empty(), ErrorCode::Schema,
            manifest_path + ": 'clips' must be a non-empty array");

    std::vector<TrainSample> samples;
    samples.reserve(j["clips"].size());
    for (const auto& clip : j["clips"]) {
        require(clip.is_object() && clip.contains("id") && clip["id"].is_string(),
                ErrorCode::Schema, manifest_path + ": each clip needs a string 'id'");
        std::string id = clip["id"].get<std::string>();

        TrainSample sample;
        sample.id = id;
        sample.map = load_stmap((root / (id + ".csv")).string(), spec.sample_rate);

        std::string truth_path = (root / (id + ".truth.json")).string();
        nlohmann::json truth;
        try {
            truth = nlohmann::json::parse(read_text_file(truth_path));
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorCode::Schema, truth_path + ": invalid JSON: " + e.what());
        }
        require(truth.is_object() && truth.contains("id") && truth.contains("hr") &&
                    truth.contains("sample_rate") && truth.contains("frames") &&
                    truth.contains("bvp"),
                ErrorCode::Schema,
                truth_path + ": expected id, hr, sample_rate, frames, bvp");
        require(truth["id"].is_string() && truth["id"].get<std::string>() == id,
                ErrorCode::Schema, truth_path + ": id does not match the clip");
        require(truth["hr"].is_number() && truth["sample_rate"].is_number() &&
                    truth["frames"].is_number_integer() && truth["bvp"].is_array(),
                ErrorCode::Schema, truth_path + ": malformed field types");
        require(truth["sample_rate"].get<double>() == spec.sample_rate, ErrorCode::Schema,
                truth_path + ": sample rate differs from the manifest");
        require(truth["frames"].get<int>() == sample.map.frames, ErrorCode::Schema,
                truth_path + ": frame count differs from the map");
        require(truth["bvp"].size() == static_cast<size_t>(sample.map.frames),
                ErrorCode::Schema, truth_path + ": waveform length differs from the map");

        sample.target_bvp.sample_rate = spec.sample_rate;
        sample.target_bvp.samples.reserve(sample.map.frames);
        for (const auto& v : truth["bvp"]) {
            require(v.is_number(), ErrorCode::Schema,
                    truth_path + ": waveform must contain numbers");
            sample.target_bvp.samples.push_back(v.get<double>());
        }
        sample.reference_hr = truth["hr"].get<double>();
        validate_sample(sample);
        samples.push_back(std::move(sample));
    }
    return samples;
}

InferResult infer_bvp(const SrrnModel& model, const StMap& map, int threads,
                      bool capture_attention) {
    require(map.color_space == ColorSpace::RGB, ErrorCode::State,
            "inference expects a raw RGB map");
    require(map.regions == model.config.regions, ErrorCode::Config,
            "map region count does not match the model");
    model.config.validate(map.frames);

    StMap pre = temporal_normalize(csc_modified_yuv(map));
    MultiBandSignal mbs;
    const MultiBandSignal* bands_ptr = nullptr;
    if (!model.config.bands.empty()) {
        mbs = decompose(pre, model.config.bands, threads);
        bands_ptr = &mbs;
    }

    InferResult result;
    SrrnTape tape;
    result.bvp = srrn_forward(model, pre, bands_ptr, Mode::Infer,
                              capture_attention ? &tape : nullptr);
    if (capture_attention) result.attention = collect_attention(tape);
    result.report = physio_report(result.bvp);
    return result;
}

std::vector<EvalRow> evaluate_corpus(const SrrnModel* model,
                                     const std::vector<TrainSample>& corpus,
                                     int threads) {
    require(corpus.size() >= 2, ErrorCode::Argument,
            "evaluation needs at least two clips");
    int n = static_cast<int>(corpus.size());

    std::vector<double> true_hr(n);
    std::vector<double> model_hr(n), green_hr(n), chrom_hr(n), pos_hr(n);
    parallel_for(n, threads, [&](int i) {
        const TrainSample& sample = corpus[i];
        validate_sample(sample);
        true_hr[i] = sample.reference_hr;
        if (model) {
            model_hr[i] = hr_or_penalty([&] {
                StMap pre = temporal_normalize(csc_modified_yuv(sample.map));
                MultiBandSignal mbs;
                const MultiBandSignal* bands_ptr = nullptr;
                if (!model->config.bands.empty()) {
                    mbs = decompose(pre, model->config.bands, 1);
                    bands_ptr = &mbs;
                }
                return srrn_forward(*model, pre, bands_ptr, Mode::Infer);
            });
        }
        green_hr[i] = hr_or_penalty(
            [&] { return baseline_extract(sample.map, BaselineMethod::Green); });
        chrom_hr[i] = hr_or_penalty(
            [&] { return baseline_extract(sample.map, BaselineMethod::Chrom); });
        pos_hr[i] = hr_or_penalty(
            [&] { return baseline_extract(sample.map, BaselineMethod::Pos); });
    });

    std::vector<EvalRow> rows;
    if (model) rows.push_back({"fastbvp", metrics(model_hr, true_hr)});
    rows.push_back({"green", metrics(green_hr, true_hr)});
    rows.push_back({"chrom", metrics(chrom_hr, true_hr)});
    rows.push_back({"pos", metrics(pos_hr, true_hr)});
    return rows;
}

std::string eval_to_csv(const std::vector<EvalRow>& rows) {
    std::string out = "method,mae,rmse,std,r\n";
    for (const auto& row : rows) {
        out += row.method + "," + format_double(row.metric.mae) + "," +
               format_double(row.metric.rmse) + "," + format_double(row.metric.std_dev) +
               "," + format_double(row.metric.r) + "\n";
    }
    return out;
}

}  // namespace fastbvp
