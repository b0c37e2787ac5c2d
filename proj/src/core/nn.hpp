#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace fastbvp {

// Channels x length tensor, row-major.
struct Tensor1d {
    int channels = 0;
    int length = 0;
    std::vector<double> data;

    Tensor1d() = default;
    Tensor1d(int c, int l)
        : channels(c), length(l), data(static_cast<size_t>(c) * l, 0.0) {
        if (c < 1 || l < 1) raise(ErrorCode::Shape, "tensor dims must be >= 1");
    }
    double& at(int c, int i) { return data[static_cast<size_t>(c) * length + i]; }
    double at(int c, int i) const { return data[static_cast<size_t>(c) * length + i]; }
    size_t size() const { return data.size(); }
};

enum class LayerKind {
    Conv1d,
    Deconv1d,
    BatchNorm,
    Relu,
    Elu,
    AvgPool,
    SoftmaxAttention,
};

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int in_channels = 0;   // 0 = any (parameterless layers)
    int out_channels = 0;
    int kernel = 1;
    int stride = 1;
    int padding = 0;
    std::string name;      // parameter prefix; empty for parameterless layers
};

// padding -1 selects same-length padding (kernel-1)/2.
LayerSpec conv_spec(const std::string& name, int in, int out, int kernel,
                    int stride = 1, int padding = -1);
LayerSpec deconv_spec(const std::string& name, int in, int out, int kernel,
                      int stride, int padding = 0);
LayerSpec bn_spec(const std::string& name, int channels);
LayerSpec relu_spec();
LayerSpec elu_spec();
LayerSpec pool_spec(int factor);
LayerSpec attention_spec();

// Named parameter arrays in stable insertion order. Running statistics are
// stored alongside weights but flagged non-learnable.
struct ParamStore {
    struct Entry {
        std::string name;
        std::vector<double> values;
        bool learnable = true;
    };
    std::vector<Entry> entries;
    std::map<std::string, int> index;

    Entry& add(const std::string& name, size_t size, bool learnable = true);
    bool has(const std::string& name) const { return index.count(name) != 0; }
    Entry& get(const std::string& name);
    const Entry& get(const std::string& name) const;
    std::vector<double>& values(const std::string& name) { return get(name).values; }
    const std::vector<double>& values(const std::string& name) const {
        return get(name).values;
    }

    size_t learnable_count() const;
    ParamStore zeros_like() const;  // same names/shapes/flags, zero values
    void fill(double v);
};

enum class Mode { Train, Infer };

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;
constexpr double kEluAlpha = 1.0;

struct LayerCache {
    bool valid = false;
    Tensor1d x;                     // layer input
    std::vector<double> mean, var;  // batchnorm per-channel stats (biased var)
    std::vector<double> attn;       // attention weights, rows x rows
};

// Allocates and initializes the layer's parameters (fan-in-scaled uniform
// weights, zero biases, BN scale 1 / shift 0 / running stats 0,1).
void init_layer_params(const LayerSpec& spec, ParamStore& params, Rng& rng);

Tensor1d forward_layer(const LayerSpec& spec, const ParamStore& params,
                       const Tensor1d& x, Mode mode, LayerCache* cache = nullptr);

// dy is the gradient w.r.t. the layer output; the return value is the
// gradient w.r.t. the input. Parameter gradients are accumulated (+=) into
// dparams entries of the same names, created on demand.
Tensor1d backward_layer(const LayerSpec& spec, const ParamStore& params,
                        const LayerCache& cache, const Tensor1d& dy,
                        ParamStore* dparams);

// running = momentum * running + (1 - momentum) * batch, applied to the
// `<name>.rmean` / `<name>.rvar` entries. Called once per batch by the
// trainer with batch-averaged statistics so the update order is fixed.
void bn_update_running(ParamStore& params, const std::string& name,
                       const std::vector<double>& batch_mean,
                       const std::vector<double>& batch_var, double momentum);

// q: (Rq x d), k: (Rk x d), v: (Rk x dv); rows are channels.
// Returns softmax(q k^T / sqrt(d)) v; attention weights (Rq x Rk, row-major)
// are written to *weights when given.
Tensor1d sdp_attention(const Tensor1d& q, const Tensor1d& k, const Tensor1d& v,
                       std::vector<double>* weights = nullptr);
void sdp_attention_backward(const Tensor1d& q, const Tensor1d& k, const Tensor1d& v,
                            const std::vector<double>& weights, const Tensor1d& dout,
                            Tensor1d* dq, Tensor1d* dk, Tensor1d* dv);

// --- finite-difference gradient verification -------------------------------

struct GradCheckGroup {
    std::string name;
    double* values = nullptr;       // mutated during probing, restored after
    const double* grads = nullptr;  // analytic gradients, valid after compute_grads
    size_t size = 0;
};

struct GradCheckReport {
    struct GroupResult {
        std::string name;
        double max_rel_error = 0.0;
        int probes = 0;
    };
    std::vector<GroupResult> groups;
    double max_rel_error = 0.0;
    bool within(double tol) const { return max_rel_error <= tol; }
};

// Central differences with per-coordinate step epsilon * max(1, |value|).
// `loss` evaluates the scalar objective at the current parameter values;
// `compute_grads` fills the analytic gradients once at the base point.
// Failures are reported in the result, never thrown.
GradCheckReport check_gradients(const std::function<double()>& loss,
                                const std::function<void()>& compute_grads,
                                const std::vector<GradCheckGroup>& groups,
                                int probes_per_group, double epsilon, uint64_t seed);

}  // namespace fastbvp
