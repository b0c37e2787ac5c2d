#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "core/nn.hpp"
#include "core/spectral.hpp"
#include "core/stmap.hpp"

namespace fastbvp {

struct BvpSignal {
    std::vector<double> samples;
    double sample_rate = 0.0;
};

// Network hyperparameters. `bands` empty means the decompose stage is
// disabled and the model consumes map channels only (ablation mode).
struct SrrnConfig {
    int regions = 4;
    std::vector<FrequencyBand> bands = default_bands();
    std::array<int, 4> block_widths{8, 8, 8, 8};
    std::array<int, 4> pool_factors{3, 3, 1, 1};
    std::array<int, 3> tmsc_kernels{3, 5, 7};
    std::array<int, 3> deconv_widths{12, 12, 8};
    std::array<int, 3> deconv_strides{3, 3, 1};
    int ssa_segments = 5;

    int bands_count() const { return static_cast<int>(bands.size()); }
    int input_channels() const { return (bands_count() + 1) * regions * 3; }

    // Checks width/divisibility constraints for a clip of length `frames`
    // (pass 0 to check only length-independent constraints).
    void validate(int frames = 0) const;
};

SrrnConfig parse_srrn_config_json(const std::string& text, const std::string& origin);
std::string srrn_config_to_json(const SrrnConfig& config);

// Fixed network topology derived from a config; the single source of truth
// for parameter shapes, initialization order, and cost accounting.
struct SrrnLayout {
    struct Refine {
        LayerSpec conv, bn;
        std::array<LayerSpec, 3> tmsc;
        LayerSpec pool;
    };
    struct Recon {
        LayerSpec deconv, bn;
        LayerSpec ssa_conv_a, ssa_conv_b;
    };
    std::array<Refine, 4> refine;
    std::array<Recon, 3> recon;
    LayerSpec head;
};

SrrnLayout make_layout(const SrrnConfig& config);

struct SrrnModel {
    SrrnConfig config;
    ParamStore params;
};

SrrnModel make_model(const SrrnConfig& config, uint64_t seed);

size_t count_params(const SrrnConfig& config);

struct FlopItem {
    std::string name;
    int64_t flops = 0;
};

// Forward cost for one T-frame clip, 2 FLOPs per multiply-accumulate,
// itemized per stage. Includes the decompose transforms (at dense transform
// cost) when the config has bands; the runtime skips zeroed bins, so the
// dense figure is an upper bound on executed work.
std::vector<FlopItem> flops_breakdown(const SrrnConfig& config, int frames);
int64_t count_flops(const SrrnConfig& config, int frames);

// --- forward / backward -----------------------------------------------------

struct TmscCache {
    std::array<LayerCache, 3> branches;
};

struct SsaCache {
    Tensor1d x;
    int segments = 0;
    int seg_len = 0;
    std::vector<double> spectra;   // channels * S * m, row-major per channel
    std::vector<double> attn;      // channels * S * S
    LayerCache conv_a, relu, conv_b;
    std::vector<double> gain;      // channels * S (post-sigmoid)
    bool valid = false;
};

struct SrrnTape {
    struct RefineTape {
        LayerCache conv, bn, relu, pool;
        TmscCache tmsc;
    };
    struct ReconTape {
        LayerCache deconv, bn, elu;
        SsaCache ssa;
    };
    std::array<RefineTape, 4> refine;
    std::array<ReconTape, 3> recon;
    LayerCache head;
    bool valid = false;
};

// Three parallel same-length convolutions (kernels per layout), outputs
// concatenated along channels.
Tensor1d tmsc_forward(const std::array<LayerSpec, 3>& branches, const ParamStore& params,
                      const Tensor1d& x, Mode mode, TmscCache* cache = nullptr);
Tensor1d tmsc_backward(const std::array<LayerSpec, 3>& branches, const ParamStore& params,
                       const TmscCache& cache, const Tensor1d& dy, ParamStore* dparams);

// Per channel: split the feature into S segments, transform each segment,
// run self-attention across segment spectra, push the attended spectra
// through the two-convolution global stage, derive a per-(channel, segment)
// sigmoid gain, and reweight the input with it.
Tensor1d ssa_forward(const LayerSpec& conv_a, const LayerSpec& conv_b,
                     const ParamStore& params, const Tensor1d& x, int segments,
                     Mode mode, SsaCache* cache = nullptr);
Tensor1d ssa_backward(const LayerSpec& conv_a, const LayerSpec& conv_b,
                      const ParamStore& params, const SsaCache& cache,
                      const Tensor1d& dy, ParamStore* dparams);

// Map channels first (region-major), then each band's channels in band order.
Tensor1d assemble_input(const StMap& map, const MultiBandSignal* bands,
                        const SrrnConfig& config);

Tensor1d srrn_forward_tensor(const SrrnModel& model, const Tensor1d& input, Mode mode,
                             SrrnTape* tape = nullptr);

// bands may be null only when the config has no bands.
BvpSignal srrn_forward(const SrrnModel& model, const StMap& map,
                       const MultiBandSignal* bands, Mode mode,
                       SrrnTape* tape = nullptr);

// dout: gradient w.r.t. the (1, T) output; returns the gradient w.r.t. the
// assembled input; accumulates parameter gradients into dparams.
Tensor1d srrn_backward(const SrrnModel& model, const SrrnTape& tape,
                       const Tensor1d& dout, ParamStore* dparams);

// Attention maps harvested from a tape for diagnostics/plots: one entry per
// reconstruction block, each channels * S * S.
struct AttentionSnapshot {
    int block = 0;
    int channels = 0;
    int segments = 0;
    std::vector<double> weights;  // channels * S * S
};
std::vector<AttentionSnapshot> collect_attention(const SrrnTape& tape);

// --- checkpoint i/o ----------------------------------------------------------

// Single-file format: 8-byte magic, little-endian u32 manifest length, JSON
// manifest, float32 little-endian parameter blob (see docs for byte layout).
void save_model(const SrrnModel& model, const std::string& path);
SrrnModel load_model(const std::string& path);

}  // namespace fastbvp
