#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/srrn.hpp"

namespace fastbvp {

struct TrainSample {
    std::string id;
    StMap map;              // raw RGB map as loaded from disk
    BvpSignal target_bvp;
    double reference_hr = 0.0;  // bpm
};

void validate_sample(const TrainSample& sample);

// Contiguous HR bins [edges[i], edges[i+1]) with a per-batch quota each.
struct HrGroupScheme {
    std::vector<double> group_edges;   // strictly increasing, size = groups + 1
    std::vector<int> per_group_quota;  // size = groups; sums to batch size

    int groups() const { return static_cast<int>(per_group_quota.size()); }
    void validate(int batch_size) const;
};

// Derives a scheme from observed HRs: 20-bpm bins covering the data range,
// empty bins merged into a neighbor, group count capped at batch_size, batch
// quota split as evenly as possible.
HrGroupScheme derive_group_scheme(const std::vector<double>& hrs, int batch_size);

// Batches for one epoch: every batch takes exactly per_group_quota[g] samples
// from group g; groups that run out within the epoch are reshuffled and
// reused. Samples outside the scheme's overall range are an error.
std::vector<std::vector<int>> make_oversampled_batches(
    const std::vector<double>& sample_hrs, const HrGroupScheme& scheme,
    int batches, uint64_t seed);

struct TrainConfig {
    int phase1_epochs = 30;
    int phase2_epochs = 12;
    double lr_phase1 = 1e-3;
    double lr_phase2 = 1e-4;
    int batch_size = 12;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double noise_sigma = 0.05;   // augmentation on normalized traces
    double val_fraction = 0.15;  // 0 disables validation
    uint64_t seed = 1;
    // Optional explicit phase-2 scheme; empty -> derived from the data.
    std::vector<double> group_edges;
    std::vector<int> per_group_quota;

    void validate() const;
};

TrainConfig parse_train_config_json(const std::string& text, const std::string& origin);
std::string train_config_to_json(const TrainConfig& config);

// loss = 1 - pearson(pred, target), with the analytic gradient w.r.t. pred.
// A constant prediction yields loss 1 with zero gradient; a constant target
// is a data error.
struct LossResult {
    double loss = 0.0;
    std::vector<double> grad;
};
LossResult neg_pearson_loss(const std::vector<double>& pred,
                            const std::vector<double>& target);

// Adaptive-moment optimizer over the learnable ParamStore entries.
struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t step = 0;
    ParamStore m, v;

    void init(const ParamStore& params);
    void update(ParamStore& params, const ParamStore& grads, double lr);
};

struct EpochRecord {
    int epoch = 0;      // 1-based, global across phases
    int phase = 0;      // 1 or 2
    double train_loss = 0.0;
    double val_mae = 0.0;  // NaN when validation is disabled
};

struct FitResult {
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val_mae = 0.0;
};

std::string history_to_csv(const std::vector<EpochRecord>& history);

using ProgressFn = std::function<void(const EpochRecord&)>;

// Two-phase optimization: phase 1 samples uniformly at lr_phase1, phase 2
// draws per-HR-group quotas at lr_phase2 with optimizer state retained.
// The model ends at the best-validation parameters. Reproducible bit-for-bit
// given config.seed, independent of `threads`.
FitResult fit(const std::vector<TrainSample>& corpus, SrrnModel& model,
              const TrainConfig& config, int threads = 1,
              const ProgressFn& progress = nullptr);

}  // namespace fastbvp
