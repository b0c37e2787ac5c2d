#pragma once

#include <string>
#include <vector>

#include "core/physio.hpp"
#include "core/synth.hpp"
#include "core/train.hpp"

namespace fastbvp {

// Reads a corpus directory written by build_corpus: manifest.json names the
// clips, each stored as `<id>.csv` plus `<id>.truth.json`.
std::vector<TrainSample> load_corpus(const std::string& dir);

struct InferResult {
    BvpSignal bvp;
    PhysioReport report;
    std::vector<AttentionSnapshot> attention;  // filled when requested
};

// Raw RGB map -> normalized mYUV -> multi-band decomposition -> network ->
// waveform analysis. Raises Insufficient when the output has no usable pulse.
InferResult infer_bvp(const SrrnModel& model, const StMap& map, int threads = 1,
                      bool capture_attention = false);

struct EvalRow {
    std::string method;  // "fastbvp", "green", "chrom", "pos"
    MetricReport metric;
};

// Per-clip HR for the model (skipped when null) and the three classic
// baselines against corpus ground truth. A clip where a method fails to
// produce a usable pulse counts as a 0 bpm estimate.
std::vector<EvalRow> evaluate_corpus(const SrrnModel* model,
                                     const std::vector<TrainSample>& corpus,
                                     int threads = 1);

std::string eval_to_csv(const std::vector<EvalRow>& rows);

}  // namespace fastbvp
