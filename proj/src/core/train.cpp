#include "core/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "core/physio.hpp"

namespace fastbvp {
namespace {

void require(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond) raise(code, msg);
}

// Independent RNG streams hanging off the master seed.
constexpr uint64_t kStreamValSplit = 0x76616c73;
constexpr uint64_t kStreamShuffle = 0x73687566;
constexpr uint64_t kStreamNoise = 0x6e6f6973;
constexpr uint64_t kStreamOversample = 0x6f766572;

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
        int j = rng.uniform_int(i + 1);
        std::swap(idx[i], idx[j]);
    }
}

int group_of(const HrGroupScheme& scheme, double hr) {
    const auto& e = scheme.group_edges;
    if (hr < e.front() || hr >= e.back()) return -1;
    for (int g = 0; g < scheme.groups(); ++g) {
        if (hr >= e[g] && hr < e[g + 1]) return g;
    }
    return -1;
}

std::string interval_text(double lo, double hi) {
    return "[" + format_double(lo) + ", " + format_double(hi) + ")";
}

}  // namespace

void validate_sample(const TrainSample& sample) {
    require(sample.map.color_space == ColorSpace::RGB, ErrorCode::State,
            "sample '" + sample.id + "': map must be a raw RGB map");
    require(sample.map.frames >= 2, ErrorCode::Shape,
            "sample '" + sample.id + "': map too short");
    require(static_cast<int>(sample.target_bvp.samples.size()) == sample.map.frames,
            ErrorCode::Shape,
            "sample '" + sample.id + "': target length does not match map frames");
    require(sample.target_bvp.sample_rate == sample.map.sample_rate, ErrorCode::Shape,
            "sample '" + sample.id + "': target/map sample rates differ");
    require(all_finite(sample.target_bvp.samples), ErrorCode::Data,
            "sample '" + sample.id + "': non-finite target waveform");
    require(sample.reference_hr >= 40.0 && sample.reference_hr <= 240.0, ErrorCode::Data,
            "sample '" + sample.id + "': reference HR outside 40-240 bpm");
}

void HrGroupScheme::validate(int batch_size) const {
    require(group_edges.size() >= 2, ErrorCode::Config, "scheme needs at least one group");
    for (size_t i = 0; i + 1 < group_edges.size(); ++i) {
        require(group_edges[i] < group_edges[i + 1], ErrorCode::Config,
                "group edges must be strictly increasing");
    }
    require(per_group_quota.size() + 1 == group_edges.size(), ErrorCode::Config,
            "quota count must equal group count");
    int total = 0;
    for (int q : per_group_quota) {
        require(q >= 0, ErrorCode::Config, "group quotas must be >= 0");
        total += q;
    }
    require(total == batch_size, ErrorCode::Config,
            "group quotas must sum to the batch size");
}

HrGroupScheme derive_group_scheme(const std::vector<double>& hrs, int batch_size) {
    require(!hrs.empty(), ErrorCode::Argument, "no heart rates to derive groups from");
    require(batch_size >= 1, ErrorCode::Argument, "batch size must be >= 1");
    require(all_finite(hrs), ErrorCode::Data, "non-finite heart rate");

    double lo_hr = *std::min_element(hrs.begin(), hrs.end());
    double hi_hr = *std::max_element(hrs.begin(), hrs.end());
    double lo = std::floor(lo_hr / 20.0) * 20.0;
    double hi = (std::floor(hi_hr / 20.0) + 1.0) * 20.0;  // max always falls inside

    std::vector<double> edges;
    for (double e = lo; e < hi + 1e-9; e += 20.0) edges.push_back(e);

    auto counts_for = [&](const std::vector<double>& ed) {
        std::vector<int> counts(ed.size() - 1, 0);
        for (double hr : hrs) {
            for (size_t g = 0; g + 1 < ed.size(); ++g) {
                if (hr >= ed[g] && hr < ed[g + 1]) {
                    ++counts[g];
                    break;
                }
            }
        }
        return counts;
    };

    std::vector<int> counts = counts_for(edges);
    auto merge_into_right = [&](size_t g) {
        // Drop the edge between bin g and bin g+1.
        counts[g + 1] += counts[g];
        counts.erase(counts.begin() + g);
        edges.erase(edges.begin() + g + 1);
    };
    auto merge_into_left = [&](size_t g) {
        counts[g - 1] += counts[g];
        counts.erase(counts.begin() + g);
        edges.erase(edges.begin() + g);
    };

    // Remove empty bins, folding each into its right neighbor (left for the
    // last bin) so the partition stays contiguous.
    for (size_t g = 0; g < counts.size();) {
        if (counts[g] > 0) {
            ++g;
        } else if (g + 1 < counts.size()) {
            merge_into_right(g);
        } else if (g > 0) {
            merge_into_left(g);
        } else {
            break;  // single empty bin cannot happen: hrs is non-empty
        }
    }

    // Cap the number of groups so every group can receive at least one slot.
    while (static_cast<int>(counts.size()) > batch_size) {
        size_t smallest = 0;
        for (size_t g = 1; g < counts.size(); ++g) {
            if (counts[g] < counts[smallest]) smallest = g;
        }
        if (smallest + 1 < counts.size()) {
            merge_into_right(smallest);
        } else {
            merge_into_left(smallest);
        }
    }

    HrGroupScheme scheme;
    scheme.group_edges = edges;
    int groups = static_cast<int>(counts.size());
    int base = batch_size / groups;
    int rem = batch_size % groups;
    scheme.per_group_quota.assign(groups, base);
    for (int g = 0; g < rem; ++g) ++scheme.per_group_quota[g];
    scheme.validate(batch_size);
    return scheme;
}

std::vector<std::vector<int>> make_oversampled_batches(
    const std::vector<double>& sample_hrs, const HrGroupScheme& scheme,
    int batches, uint64_t seed) {
    int batch_size = std::accumulate(scheme.per_group_quota.begin(),
                                     scheme.per_group_quota.end(), 0);
    scheme.validate(batch_size);
    require(batch_size >= 1, ErrorCode::Argument, "group quotas sum to zero");
    require(batches >= 1, ErrorCode::Argument, "batches must be >= 1");
    require(!sample_hrs.empty(), ErrorCode::Argument, "no samples to batch");

    int groups = scheme.groups();
    std::vector<std::vector<int>> members(groups);
    for (size_t i = 0; i < sample_hrs.size(); ++i) {
        int g = group_of(scheme, sample_hrs[i]);
        require(g >= 0, ErrorCode::Config,
                "sample HR " + format_double(sample_hrs[i]) +
                    " falls outside the group scheme range " +
                    interval_text(scheme.group_edges.front(), scheme.group_edges.back()));
        members[g].push_back(static_cast<int>(i));
    }
    for (int g = 0; g < groups; ++g) {
        require(scheme.per_group_quota[g] == 0 || !members[g].empty(), ErrorCode::Config,
                "HR group " +
                    interval_text(scheme.group_edges[g], scheme.group_edges[g + 1]) +
                    " has a quota but no samples");
    }

    Rng rng(seed);
    std::vector<std::vector<int>> queues = members;
    std::vector<size_t> cursor(groups, 0);
    for (int g = 0; g < groups; ++g) shuffle_indices(queues[g], rng);

    std::vector<std::vector<int>> result;
    result.reserve(batches);
    for (int b = 0; b < batches; ++b) {
        std::vector<int> batch;
        batch.reserve(batch_size);
        for (int g = 0; g < groups; ++g) {
            for (int q = 0; q < scheme.per_group_quota[g]; ++q) {
                if (cursor[g] == queues[g].size()) {
                    shuffle_indices(queues[g], rng);
                    cursor[g] = 0;
                }
                batch.push_back(queues[g][cursor[g]++]);
            }
        }
        result.push_back(std::move(batch));
    }
    return result;
}

void TrainConfig::validate() const {
    require(phase1_epochs >= 0 && phase2_epochs >= 0, ErrorCode::Config,
            "epoch counts must be >= 0");
    require(phase1_epochs + phase2_epochs >= 1, ErrorCode::Config,
            "at least one epoch required");
    require(lr_phase1 > 0.0 && lr_phase2 > 0.0, ErrorCode::Config,
            "learning rates must be positive");
    require(batch_size >= 1, ErrorCode::Config, "batch size must be >= 1");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
            ErrorCode::Config, "adam betas must lie in [0, 1)");
    require(adam_eps > 0.0, ErrorCode::Config, "adam epsilon must be positive");
    require(noise_sigma >= 0.0, ErrorCode::Config, "noise sigma must be >= 0");
    require(val_fraction >= 0.0 && val_fraction < 1.0, ErrorCode::Config,
            "validation fraction must lie in [0, 1)");
    require(group_edges.empty() == per_group_quota.empty(), ErrorCode::Config,
            "group edges and quotas must be given together");
    if (!group_edges.empty()) {
        HrGroupScheme scheme{group_edges, per_group_quota};
        scheme.validate(batch_size);
    }
}

TrainConfig parse_train_config_json(const std::string& text, const std::string& origin) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::Schema, origin + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) raise(ErrorCode::Schema, origin + ": config must be a JSON object");

    static const char* known[] = {"phase1_epochs", "phase2_epochs",   "lr_phase1",
                                  "lr_phase2",     "batch_size",      "adam_beta1",
                                  "adam_beta2",    "adam_eps",        "noise_sigma",
                                  "val_fraction",  "seed",            "group_edges",
                                  "per_group_quota"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || (it.key() == k);
        if (!ok) raise(ErrorCode::Schema, origin + ": unknown config key '" + it.key() + "'");
    }

    TrainConfig c;
    auto read_int = [&](const char* key, int& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number_integer()) {
            raise(ErrorCode::Schema, origin + ": '" + std::string(key) + "' must be an integer");
        }
        out = j[key].get<int>();
    };
    auto read_double = [&](const char* key, double& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number()) {
            raise(ErrorCode::Schema, origin + ": '" + std::string(key) + "' must be a number");
        }
        out = j[key].get<double>();
    };
    read_int("phase1_epochs", c.phase1_epochs);
    read_int("phase2_epochs", c.phase2_epochs);
    read_double("lr_phase1", c.lr_phase1);
    read_double("lr_phase2", c.lr_phase2);
    read_int("batch_size", c.batch_size);
    read_double("adam_beta1", c.adam_beta1);
    read_double("adam_beta2", c.adam_beta2);
    read_double("adam_eps", c.adam_eps);
    read_double("noise_sigma", c.noise_sigma);
    read_double("val_fraction", c.val_fraction);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_integer()) {
            raise(ErrorCode::Schema, origin + ": 'seed' must be an integer");
        }
        c.seed = j["seed"].get<uint64_t>();
    }
    if (j.contains("group_edges")) {
        if (!j["group_edges"].is_array()) {
            raise(ErrorCode::Schema, origin + ": 'group_edges' must be an array");
        }
        for (const auto& v : j["group_edges"]) {
            if (!v.is_number()) {
                raise(ErrorCode::Schema, origin + ": 'group_edges' must contain numbers");
            }
            c.group_edges.push_back(v.get<double>());
        }
    }
    if (j.contains("per_group_quota")) {
        if (!j["per_group_quota"].is_array()) {
            raise(ErrorCode::Schema, origin + ": 'per_group_quota' must be an array");
        }
        for (const auto& v : j["per_group_quota"]) {
            if (!v.is_number_integer()) {
                raise(ErrorCode::Schema, origin + ": 'per_group_quota' must contain integers");
            }
            c.per_group_quota.push_back(v.get<int>());
        }
    }
    c.validate();
    return c;
}

std::string train_config_to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["phase1_epochs"] = c.phase1_epochs;
    j["phase2_epochs"] = c.phase2_epochs;
    j["lr_phase1"] = c.lr_phase1;
    j["lr_phase2"] = c.lr_phase2;
    j["batch_size"] = c.batch_size;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["adam_eps"] = c.adam_eps;
    j["noise_sigma"] = c.noise_sigma;
    j["val_fraction"] = c.val_fraction;
    j["seed"] = c.seed;
    j["group_edges"] = c.group_edges;
    j["per_group_quota"] = c.per_group_quota;
    return j.dump(2);
}

LossResult neg_pearson_loss(const std::vector<double>& pred,
                            const std::vector<double>& target) {
    require(pred.size() == target.size(), ErrorCode::Shape,
            "prediction/target length mismatch");
    require(pred.size() >= 3, ErrorCode::Argument, "need at least three samples");
    require(all_finite(pred), ErrorCode::Data, "non-finite prediction");
    require(all_finite(target), ErrorCode::Data, "non-finite target");

    size_t n = pred.size();
    double pm = mean_of(pred);
    double tm = mean_of(target);
    std::vector<double> pc(n), tc(n);
    double pp = 0.0, tt = 0.0, pt = 0.0;
    for (size_t i = 0; i < n; ++i) {
        pc[i] = pred[i] - pm;
        tc[i] = target[i] - tm;
        pp += pc[i] * pc[i];
        tt += tc[i] * tc[i];
        pt += pc[i] * tc[i];
    }
    require(tt > 1e-20, ErrorCode::Data, "constant target waveform");

    LossResult out;
    out.grad.assign(n, 0.0);
    if (pp < 1e-20) {
        out.loss = 1.0;  // constant prediction: correlation undefined, worst loss
        return out;
    }
    double b = std::sqrt(pp * tt);
    double r = std::clamp(pt / b, -1.0, 1.0);
    out.loss = 1.0 - r;
    double scale = pt / (b * pp);
    for (size_t i = 0; i < n; ++i) out.grad[i] = -(tc[i] / b - scale * pc[i]);
    return out;
}

void Adam::init(const ParamStore& params) {
    m = params.zeros_like();
    v = params.zeros_like();
    step = 0;
}

void Adam::update(ParamStore& params, const ParamStore& grads, double lr) {
    require(lr > 0.0, ErrorCode::Argument, "learning rate must be positive");
    ++step;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (auto& entry : params.entries) {
        if (!entry.learnable) continue;
        require(grads.has(entry.name), ErrorCode::Argument,
                "missing gradient for '" + entry.name + "'");
        const auto& g = grads.get(entry.name).values;
        require(g.size() == entry.values.size(), ErrorCode::Shape,
                "gradient size mismatch for '" + entry.name + "'");
        auto& mv = m.get(entry.name).values;
        auto& vv = v.get(entry.name).values;
        for (size_t i = 0; i < g.size(); ++i) {
            mv[i] = beta1 * mv[i] + (1.0 - beta1) * g[i];
            vv[i] = beta2 * vv[i] + (1.0 - beta2) * g[i] * g[i];
            double mhat = mv[i] / bc1;
            double vhat = vv[i] / bc2;
            entry.values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

std::string history_to_csv(const std::vector<EpochRecord>& history) {
    std::string out = "epoch,phase,train_loss,val_mae\n";
    for (const auto& rec : history) {
        out += std::to_string(rec.epoch) + "," + std::to_string(rec.phase) + "," +
               format_double(rec.train_loss) + "," + format_double(rec.val_mae) + "\n";
    }
    return out;
}

namespace {

// Per-batch training state shared by both phases.
struct BatchRunner {
    const std::vector<TrainSample>& corpus;
    SrrnModel& model;
    const TrainConfig& config;
    int threads;
    const std::vector<StMap>& pre;  // normalized mYUV maps, same indexing as corpus
    const SrrnLayout& layout;
    Adam& adam;
    uint64_t noise_master;
    double last_finite_loss = std::numeric_limits<double>::quiet_NaN();

    // Runs one batch (corpus indices), accumulates gradients slot-by-slot in
    // fixed order, folds batch-averaged BN statistics into the running stats,
    // then applies one optimizer step. Returns the mean sample loss.
    double run(const std::vector<int>& batch, int epoch_global, int batch_no, double lr) {
        int slots = static_cast<int>(batch.size());
        require(slots >= 1, ErrorCode::Internal, "empty batch");
        std::vector<ParamStore> slot_grads(slots);
        std::vector<SrrnTape> slot_tapes(slots);
        std::vector<double> slot_loss(slots, 0.0);

        parallel_for(slots, threads, [&](int s) {
            int idx = batch[s];
            uint64_t stream = (static_cast<uint64_t>(epoch_global) << 40) |
                              (static_cast<uint64_t>(batch_no) << 16) |
                              static_cast<uint64_t>(s);
            StMap noisy = config.noise_sigma > 0.0
                              ? add_white_noise(pre[idx], config.noise_sigma,
                                                split_seed(noise_master, stream))
                              : pre[idx];
            MultiBandSignal mbs;
            const MultiBandSignal* bands_ptr = nullptr;
            if (!model.config.bands.empty()) {
                mbs = decompose(noisy, model.config.bands, 1);
                bands_ptr = &mbs;
            }
            Tensor1d input = assemble_input(noisy, bands_ptr, model.config);
            Tensor1d out = srrn_forward_tensor(model, input, Mode::Train, &slot_tapes[s]);
            LossResult loss = neg_pearson_loss(out.data, corpus[idx].target_bvp.samples);
            slot_loss[s] = loss.loss;
            Tensor1d dout(1, out.length);
            dout.data = loss.grad;
            srrn_backward(model, slot_tapes[s], dout, &slot_grads[s]);
        });

        double loss_sum = 0.0;
        for (int s = 0; s < slots; ++s) {
            if (!std::isfinite(slot_loss[s])) {
                raise(ErrorCode::Diverged,
                      "non-finite training loss at epoch " + std::to_string(epoch_global) +
                          " (last finite loss " + format_double(last_finite_loss) + ")");
            }
            loss_sum += slot_loss[s];
        }

        // Fixed-order reduction keeps results independent of thread count.
        ParamStore total = model.params.zeros_like();
        for (const auto& entry : model.params.entries) {
            if (!entry.learnable) continue;
            auto& acc = total.get(entry.name).values;
            for (int s = 0; s < slots; ++s) {
                const auto& g = slot_grads[s].get(entry.name).values;
                require(g.size() == acc.size(), ErrorCode::Internal,
                        "gradient shape mismatch for '" + entry.name + "'");
                for (size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
            }
            for (double& gv : acc) {
                gv /= slots;
                if (!std::isfinite(gv)) {
                    raise(ErrorCode::Diverged,
                          "non-finite gradient at epoch " + std::to_string(epoch_global) +
                              " (last finite loss " + format_double(last_finite_loss) + ")");
                }
            }
        }

        // One running-stat update per BN layer per batch, from batch-averaged
        // statistics, in layout order.
        std::vector<const LayerSpec*> bn_specs;
        for (int r = 0; r < 4; ++r) bn_specs.push_back(&layout.refine[r].bn);
        for (int r = 0; r < 3; ++r) bn_specs.push_back(&layout.recon[r].bn);
        for (size_t b = 0; b < bn_specs.size(); ++b) {
            const LayerCache& cache0 = b < 4 ? slot_tapes[0].refine[b].bn
                                             : slot_tapes[0].recon[b - 4].bn;
            std::vector<double> mean(cache0.mean.size(), 0.0);
            std::vector<double> var(cache0.var.size(), 0.0);
            for (int s = 0; s < slots; ++s) {
                const LayerCache& cache = b < 4 ? slot_tapes[s].refine[b].bn
                                                : slot_tapes[s].recon[b - 4].bn;
                for (size_t i = 0; i < mean.size(); ++i) {
                    mean[i] += cache.mean[i];
                    var[i] += cache.var[i];
                }
            }
            for (size_t i = 0; i < mean.size(); ++i) {
                mean[i] /= slots;
                var[i] /= slots;
            }
            bn_update_running(model.params, bn_specs[b]->name, mean, var, kBnMomentum);
        }

        adam.update(model.params, total, lr);
        double mean_loss = loss_sum / slots;
        last_finite_loss = mean_loss;
        return mean_loss;
    }
};

}  // namespace

FitResult fit(const std::vector<TrainSample>& corpus, SrrnModel& model,
              const TrainConfig& config, int threads, const ProgressFn& progress) {
    config.validate();
    require(!corpus.empty(), ErrorCode::Argument, "empty corpus");
    int frames = corpus[0].map.frames;
    double fs = corpus[0].map.sample_rate;
    for (const auto& sample : corpus) {
        validate_sample(sample);
        require(sample.map.regions == model.config.regions, ErrorCode::Config,
                "sample '" + sample.id + "': region count does not match the model");
        require(sample.map.frames == frames && sample.map.sample_rate == fs,
                ErrorCode::Shape, "all clips must share length and sample rate");
    }
    model.config.validate(frames);

    int n = static_cast<int>(corpus.size());

    // Deterministic validation split.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(split_seed(config.seed, kStreamValSplit));
    shuffle_indices(order, split_rng);
    int n_val = static_cast<int>(std::lround(config.val_fraction * n));
    std::vector<int> val_idx(order.begin(), order.begin() + n_val);
    std::vector<int> train_idx(order.begin() + n_val, order.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    require(static_cast<int>(train_idx.size()) >= config.batch_size, ErrorCode::Config,
            "training split smaller than one batch");

    // Preprocess every clip once; augmentation happens per batch draw.
    std::vector<StMap> pre(n);
    parallel_for(n, threads, [&](int i) {
        pre[i] = temporal_normalize(csc_modified_yuv(corpus[i].map));
    });

    // Validation inputs never change: assemble them once.
    std::vector<Tensor1d> val_inputs(val_idx.size());
    parallel_for(static_cast<int>(val_idx.size()), threads, [&](int j) {
        int idx = val_idx[j];
        MultiBandSignal mbs;
        const MultiBandSignal* bands_ptr = nullptr;
        if (!model.config.bands.empty()) {
            mbs = decompose(pre[idx], model.config.bands, 1);
            bands_ptr = &mbs;
        }
        val_inputs[j] = assemble_input(pre[idx], bands_ptr, model.config);
    });

    auto validation_mae = [&]() -> double {
        if (val_idx.empty()) return std::numeric_limits<double>::quiet_NaN();
        std::vector<double> errs(val_idx.size(), 0.0);
        parallel_for(static_cast<int>(val_idx.size()), threads, [&](int j) {
            Tensor1d out = srrn_forward_tensor(model, val_inputs[j], Mode::Infer);
            double err = 60.0;  // penalty when no usable pulse comes out
            if (all_finite(out.data)) {
                try {
                    BvpSignal bvp{out.data, fs};
                    double hr = estimate_hr(detect_peaks(bvp));
                    err = std::abs(hr - corpus[val_idx[j]].reference_hr);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::Insufficient &&
                        e.code() != ErrorCode::Degenerate) {
                        throw;
                    }
                }
            }
            errs[j] = err;
        });
        return mean_of(errs);
    };

    SrrnLayout layout = make_layout(model.config);
    Adam adam;
    adam.beta1 = config.adam_beta1;
    adam.beta2 = config.adam_beta2;
    adam.eps = config.adam_eps;
    adam.init(model.params);

    BatchRunner runner{corpus, model,  config, threads,
                       pre,    layout, adam,   split_seed(config.seed, kStreamNoise)};

    uint64_t shuffle_master = split_seed(config.seed, kStreamShuffle);
    uint64_t oversample_master = split_seed(config.seed, kStreamOversample);

    FitResult result;
    result.best_val_mae = std::numeric_limits<double>::infinity();
    ParamStore best_params = model.params;
    int epoch_global = 0;
    int total_epochs = config.phase1_epochs + config.phase2_epochs;

    auto finish_epoch = [&](int phase, double train_loss) {
        EpochRecord rec;
        rec.epoch = epoch_global;
        rec.phase = phase;
        rec.train_loss = train_loss;
        rec.val_mae = validation_mae();
        result.history.push_back(rec);
        if (!val_idx.empty() && rec.val_mae < result.best_val_mae) {
            result.best_val_mae = rec.val_mae;
            result.best_epoch = epoch_global;
            best_params = model.params;
        }
        if (progress) progress(rec);
        log_debug("epoch " + std::to_string(rec.epoch) + " phase " +
                  std::to_string(rec.phase) + " loss " + format_double(rec.train_loss) +
                  " val_mae " + format_double(rec.val_mae));
    };

    // Phase 1: uniform sampling without replacement.
    for (int e = 0; e < config.phase1_epochs; ++e) {
        ++epoch_global;
        std::vector<int> epoch_order = train_idx;
        Rng rng(split_seed(shuffle_master, static_cast<uint64_t>(epoch_global)));
        shuffle_indices(epoch_order, rng);
        int batches = static_cast<int>(epoch_order.size()) / config.batch_size;
        double loss_sum = 0.0;
        for (int b = 0; b < batches; ++b) {
            std::vector<int> batch(epoch_order.begin() + b * config.batch_size,
                                   epoch_order.begin() + (b + 1) * config.batch_size);
            loss_sum += runner.run(batch, epoch_global, b, config.lr_phase1);
        }
        finish_epoch(1, loss_sum / batches);
    }

    // Phase 2: per-HR-group quota sampling at the lower rate; the optimizer
    // keeps its moment estimates from phase 1.
    if (config.phase2_epochs > 0) {
        std::vector<double> train_hrs(train_idx.size());
        for (size_t j = 0; j < train_idx.size(); ++j) {
            train_hrs[j] = corpus[train_idx[j]].reference_hr;
        }
        HrGroupScheme scheme;
        if (config.group_edges.empty()) {
            scheme = derive_group_scheme(train_hrs, config.batch_size);
        } else {
            scheme.group_edges = config.group_edges;
            scheme.per_group_quota = config.per_group_quota;
            scheme.validate(config.batch_size);
        }
        int batches_per_epoch =
            (static_cast<int>(train_idx.size()) + config.batch_size - 1) / config.batch_size;

        for (int e = 0; e < config.phase2_epochs; ++e) {
            ++epoch_global;
            auto batches = make_oversampled_batches(
                train_hrs, scheme, batches_per_epoch,
                split_seed(oversample_master, static_cast<uint64_t>(epoch_global)));
            double loss_sum = 0.0;
            for (size_t b = 0; b < batches.size(); ++b) {
                std::vector<int> batch(batches[b].size());
                for (size_t s = 0; s < batches[b].size(); ++s) {
                    batch[s] = train_idx[batches[b][s]];
                }
                loss_sum += runner.run(batch, epoch_global, static_cast<int>(b),
                                       config.lr_phase2);
            }
            finish_epoch(2, loss_sum / batches.size());
        }
    }

    if (!val_idx.empty()) {
        model.params = best_params;
    } else {
        result.best_epoch = total_epochs;
        result.best_val_mae = std::numeric_limits<double>::quiet_NaN();
    }
    return result;
}

}  // namespace fastbvp
