#include "fastbvp/fastbvp.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include <json.hpp>

#include "core/pipeline.hpp"

using namespace fastbvp;

struct fbv_stmap {
    StMap map;
};
struct fbv_model {
    SrrnModel model;
};
struct fbv_corpus {
    std::vector<TrainSample> samples;
};

namespace {

thread_local std::string g_last_error;

fbv_status status_of(ErrorCode code) {
    switch (code) {
        case ErrorCode::Argument: return FBV_ERR_ARGUMENT;
        case ErrorCode::Io: return FBV_ERR_IO;
        case ErrorCode::Schema: return FBV_ERR_SCHEMA;
        case ErrorCode::Data: return FBV_ERR_DATA;
        case ErrorCode::State: return FBV_ERR_STATE;
        case ErrorCode::Shape: return FBV_ERR_SHAPE;
        case ErrorCode::Config: return FBV_ERR_CONFIG;
        case ErrorCode::Diverged: return FBV_ERR_DIVERGED;
        case ErrorCode::Insufficient: return FBV_ERR_INSUFFICIENT;
        case ErrorCode::Degenerate: return FBV_ERR_DEGENERATE;
        case ErrorCode::Internal: return FBV_ERR_INTERNAL;
    }
    return FBV_ERR_INTERNAL;
}

template <typename Fn>
fbv_status wrap(Fn&& fn) {
    try {
        fn();
        return FBV_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_of(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return FBV_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return FBV_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown failure";
        return FBV_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

double* dup_buffer(const std::vector<double>& v) {
    double* out = static_cast<double*>(std::malloc(v.size() * sizeof(double)));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, v.data(), v.size() * sizeof(double));
    return out;
}

void need(bool cond, const char* msg) {
    if (!cond) raise(ErrorCode::Argument, msg);
}

std::string attention_to_json(const std::vector<AttentionSnapshot>& snaps) {
    nlohmann::ordered_json out;
    out["blocks"] = nlohmann::json::array();
    for (const auto& snap : snaps) {
        nlohmann::ordered_json b;
        b["block"] = snap.block;
        b["channels"] = snap.channels;
        b["segments"] = snap.segments;
        nlohmann::json weights = nlohmann::json::array();
        for (int c = 0; c < snap.channels; ++c) {
            nlohmann::json rows = nlohmann::json::array();
            for (int i = 0; i < snap.segments; ++i) {
                nlohmann::json row = nlohmann::json::array();
                for (int j = 0; j < snap.segments; ++j) {
                    row.push_back(
                        snap.weights[(static_cast<size_t>(c) * snap.segments + i) *
                                         snap.segments +
                                     j]);
                }
                rows.push_back(row);
            }
            weights.push_back(rows);
        }
        b["weights"] = weights;
        out["blocks"].push_back(b);
    }
    return out.dump(2);
}

}  // namespace

extern "C" {

const char* fbv_version(void) { return "0.1.0"; }

const char* fbv_status_name(fbv_status status) {
    switch (status) {
        case FBV_OK: return "ok";
        case FBV_ERR_ARGUMENT: return "argument";
        case FBV_ERR_IO: return "io";
        case FBV_ERR_SCHEMA: return "schema";
        case FBV_ERR_DATA: return "data";
        case FBV_ERR_STATE: return "state";
        case FBV_ERR_SHAPE: return "shape";
        case FBV_ERR_CONFIG: return "config";
        case FBV_ERR_DIVERGED: return "diverged";
        case FBV_ERR_INSUFFICIENT: return "insufficient";
        case FBV_ERR_DEGENERATE: return "degenerate";
        case FBV_ERR_INTERNAL: return "internal";
    }
    return "internal";
}

const char* fbv_last_error(void) { return g_last_error.c_str(); }

void fbv_string_free(char* s) { std::free(s); }
void fbv_buffer_free(double* p) { std::free(p); }

/* ---- stmap ---------------------------------------------------------------- */

fbv_status fbv_stmap_load(const char* csv_path, double sample_rate, fbv_stmap** out) {
    return wrap([&] {
        need(csv_path && out, "csv_path and out must be non-null");
        auto handle = std::make_unique<fbv_stmap>();
        handle->map = load_stmap(csv_path, sample_rate);
        *out = handle.release();
    });
}

fbv_status fbv_stmap_from_csv(const char* csv_text, double sample_rate, fbv_stmap** out) {
    return wrap([&] {
        need(csv_text && out, "csv_text and out must be non-null");
        auto handle = std::make_unique<fbv_stmap>();
        handle->map = parse_stmap_csv(csv_text, sample_rate, "<memory>");
        *out = handle.release();
    });
}

fbv_status fbv_stmap_info(const fbv_stmap* map, int* regions, int* frames,
                          double* sample_rate) {
    return wrap([&] {
        need(map != nullptr, "map must be non-null");
        if (regions) *regions = map->map.regions;
        if (frames) *frames = map->map.frames;
        if (sample_rate) *sample_rate = map->map.sample_rate;
    });
}

void fbv_stmap_free(fbv_stmap* map) { delete map; }

/* ---- defaults -------------------------------------------------------------- */

fbv_status fbv_default_model_config(char** json_out) {
    return wrap([&] {
        need(json_out != nullptr, "json_out must be non-null");
        *json_out = dup_string(srrn_config_to_json(SrrnConfig{}));
    });
}

fbv_status fbv_default_train_config(char** json_out) {
    return wrap([&] {
        need(json_out != nullptr, "json_out must be non-null");
        *json_out = dup_string(train_config_to_json(TrainConfig{}));
    });
}

fbv_status fbv_default_synth_spec(char** json_out) {
    return wrap([&] {
        need(json_out != nullptr, "json_out must be non-null");
        *json_out = dup_string(synth_spec_to_json(SynthSpec{}));
    });
}

/* ---- synth / corpus --------------------------------------------------------- */

fbv_status fbv_synth_corpus(const char* spec_json, const char* out_dir) {
    return wrap([&] {
        need(spec_json && out_dir, "spec_json and out_dir must be non-null");
        SynthSpec spec = parse_synth_spec_json(spec_json, "<spec>");
        build_corpus(spec, out_dir);
    });
}

fbv_status fbv_corpus_load(const char* dir, fbv_corpus** out) {
    return wrap([&] {
        need(dir && out, "dir and out must be non-null");
        auto handle = std::make_unique<fbv_corpus>();
        handle->samples = load_corpus(dir);
        *out = handle.release();
    });
}

fbv_status fbv_corpus_info(const fbv_corpus* corpus, int* count, int* frames,
                           double* sample_rate) {
    return wrap([&] {
        need(corpus != nullptr, "corpus must be non-null");
        if (count) *count = static_cast<int>(corpus->samples.size());
        if (frames) *frames = corpus->samples.empty() ? 0 : corpus->samples[0].map.frames;
        if (sample_rate) {
            *sample_rate =
                corpus->samples.empty() ? 0.0 : corpus->samples[0].map.sample_rate;
        }
    });
}

void fbv_corpus_free(fbv_corpus* corpus) { delete corpus; }

/* ---- models ----------------------------------------------------------------- */

fbv_status fbv_model_create(const char* config_json, uint64_t seed, fbv_model** out) {
    return wrap([&] {
        need(out != nullptr, "out must be non-null");
        SrrnConfig config =
            config_json ? parse_srrn_config_json(config_json, "<config>") : SrrnConfig{};
        auto handle = std::make_unique<fbv_model>();
        handle->model = make_model(config, seed);
        *out = handle.release();
    });
}

fbv_status fbv_model_load(const char* path, fbv_model** out) {
    return wrap([&] {
        need(path && out, "path and out must be non-null");
        auto handle = std::make_unique<fbv_model>();
        handle->model = load_model(path);
        *out = handle.release();
    });
}

fbv_status fbv_model_save(const fbv_model* model, const char* path) {
    return wrap([&] {
        need(model && path, "model and path must be non-null");
        save_model(model->model, path);
    });
}

fbv_status fbv_model_config(const fbv_model* model, char** json_out) {
    return wrap([&] {
        need(model && json_out, "model and json_out must be non-null");
        *json_out = dup_string(srrn_config_to_json(model->model.config));
    });
}

void fbv_model_free(fbv_model* model) { delete model; }

fbv_status fbv_budget_report(const char* config_json, int frames, char** json_out) {
    return wrap([&] {
        need(json_out != nullptr, "json_out must be non-null");
        SrrnConfig config =
            config_json ? parse_srrn_config_json(config_json, "<config>") : SrrnConfig{};
        std::vector<FlopItem> items = flops_breakdown(config, frames);
        nlohmann::ordered_json j;
        j["params"] = count_params(config);
        j["frames"] = frames;
        int64_t total = 0;
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& item : items) {
            layers.push_back({{"name", item.name}, {"flops", item.flops}});
            total += item.flops;
        }
        j["total_flops"] = total;
        j["layers"] = layers;
        *json_out = dup_string(j.dump(2));
    });
}

/* ---- training ----------------------------------------------------------------- */

fbv_status fbv_fit(fbv_model* model, const fbv_corpus* corpus,
                   const char* train_config_json, int threads, fbv_progress_fn progress,
                   void* user, char** history_csv_out, int* best_epoch_out,
                   double* best_val_mae_out) {
    return wrap([&] {
        need(model && corpus, "model and corpus must be non-null");
        TrainConfig config = train_config_json
                                 ? parse_train_config_json(train_config_json, "<config>")
                                 : TrainConfig{};
        ProgressFn cb;
        if (progress) {
            cb = [progress, user](const EpochRecord& rec) {
                progress(rec.epoch, rec.phase, rec.train_loss, rec.val_mae, user);
            };
        }
        FitResult result = fit(corpus->samples, model->model, config, threads, cb);
        if (history_csv_out) *history_csv_out = dup_string(history_to_csv(result.history));
        if (best_epoch_out) *best_epoch_out = result.best_epoch;
        if (best_val_mae_out) *best_val_mae_out = result.best_val_mae;
    });
}

/* ---- inference ------------------------------------------------------------------ */

fbv_status fbv_infer(const fbv_model* model, const fbv_stmap* map, int threads,
                     double** bvp_out, size_t* bvp_len_out, char** report_json_out,
                     char** attention_json_out) {
    return wrap([&] {
        need(model && map, "model and map must be non-null");
        if (map->map.frames < 15.0 * map->map.sample_rate) {
            raise(ErrorCode::Insufficient,
                  "clip shorter than 15 s: " + std::to_string(map->map.frames) +
                      " frames at " + format_double(map->map.sample_rate) + " Hz");
        }
        InferResult result = infer_bvp(model->model, map->map, threads,
                                       attention_json_out != nullptr);
        if (bvp_out) *bvp_out = dup_buffer(result.bvp.samples);
        if (bvp_len_out) *bvp_len_out = result.bvp.samples.size();
        if (report_json_out) {
            *report_json_out = dup_string(physio_report_to_json(result.report));
        }
        if (attention_json_out) {
            *attention_json_out = dup_string(attention_to_json(result.attention));
        }
    });
}

fbv_status fbv_baseline_infer(const fbv_stmap* map, const char* method,
                              double** bvp_out, size_t* bvp_len_out,
                              char** report_json_out) {
    return wrap([&] {
        need(map && method, "map and method must be non-null");
        BvpSignal bvp = baseline_extract(map->map, baseline_method_from_name(method));
        PhysioReport report = physio_report(bvp);
        if (bvp_out) *bvp_out = dup_buffer(bvp.samples);
        if (bvp_len_out) *bvp_len_out = bvp.samples.size();
        if (report_json_out) *report_json_out = dup_string(physio_report_to_json(report));
    });
}

/* ---- evaluation ------------------------------------------------------------------- */

fbv_status fbv_eval(const fbv_model* model, const fbv_corpus* corpus, int threads,
                    char** csv_out) {
    return wrap([&] {
        need(corpus && csv_out, "corpus and csv_out must be non-null");
        std::vector<EvalRow> rows =
            evaluate_corpus(model ? &model->model : nullptr, corpus->samples, threads);
        *csv_out = dup_string(eval_to_csv(rows));
    });
}

/* ---- band decomposition -------------------------------------------------------------- */

fbv_status fbv_decompose_csv(const fbv_stmap* map, const char* bands_json, int threads,
                             char** csv_out) {
    return wrap([&] {
        need(map && csv_out, "map and csv_out must be non-null");
        std::vector<FrequencyBand> bands =
            bands_json ? parse_bands_json(bands_json, "<bands>") : default_bands();
        StMap pre = temporal_normalize(csc_modified_yuv(map->map));
        MultiBandSignal mbs = decompose(pre, bands, threads);

        static const char* kChannelNames[3] = {"Y", "U", "V"};
        std::string csv = "band,frame";
        for (int i = 0; i < mbs.regions; ++i) {
            for (int c = 0; c < 3; ++c) {
                csv += ",r" + std::to_string(i + 1) + "_" + kChannelNames[c];
            }
        }
        csv += "\n";
        for (size_t b = 0; b < mbs.bands.size(); ++b) {
            for (int t = 0; t < mbs.frames; ++t) {
                csv += std::to_string(b + 1) + "," + std::to_string(t);
                for (int i = 0; i < mbs.regions; ++i) {
                    for (int c = 0; c < 3; ++c) {
                        csv += "," +
                               format_double(mbs.at(static_cast<int>(b), i, c, t));
                    }
                }
                csv += "\n";
            }
        }
        *csv_out = dup_string(csv);
    });
}

}  // extern "C"
