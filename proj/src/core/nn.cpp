#include "core/nn.hpp"

#include <algorithm>
#include <cmath>

namespace fastbvp {

namespace {

void require(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond) raise(code, msg);
}

int conv_out_length(const LayerSpec& s, int length) {
    const int numer = length + 2 * s.padding - s.kernel;
    require(numer >= 0, ErrorCode::Shape,
            s.name + ": input length " + std::to_string(length) +
                " too short for kernel " + std::to_string(s.kernel));
    return numer / s.stride + 1;
}

int deconv_out_length(const LayerSpec& s, int length) {
    const int out = (length - 1) * s.stride - 2 * s.padding + s.kernel;
    require(out >= 1, ErrorCode::Shape, s.name + ": deconv output length < 1");
    return out;
}

void check_in_channels(const LayerSpec& s, const Tensor1d& x) {
    if (s.in_channels > 0) {
        require(x.channels == s.in_channels, ErrorCode::Shape,
                s.name + ": expected " + std::to_string(s.in_channels) +
                    " input channels, got " + std::to_string(x.channels));
    }
}

}  // namespace

LayerSpec conv_spec(const std::string& name, int in, int out, int kernel,
                    int stride, int padding) {
    require(kernel >= 1 && kernel % 2 == 1, ErrorCode::Config,
            name + ": conv kernel must be odd, got " + std::to_string(kernel));
    require(stride >= 1, ErrorCode::Config, name + ": stride must be >= 1");
    require(in >= 1 && out >= 1, ErrorCode::Config, name + ": channel counts must be >= 1");
    LayerSpec s;
    s.kind = LayerKind::Conv1d;
    s.name = name;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = (padding < 0) ? (kernel - 1) / 2 : padding;
    return s;
}

LayerSpec deconv_spec(const std::string& name, int in, int out, int kernel,
                      int stride, int padding) {
    require(kernel >= 1, ErrorCode::Config, name + ": kernel must be >= 1");
    require(stride >= 1, ErrorCode::Config, name + ": stride must be >= 1");
    require(padding >= 0, ErrorCode::Config, name + ": padding must be >= 0");
    require(in >= 1 && out >= 1, ErrorCode::Config, name + ": channel counts must be >= 1");
    LayerSpec s;
    s.kind = LayerKind::Deconv1d;
    s.name = name;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec bn_spec(const std::string& name, int channels) {
    require(channels >= 1, ErrorCode::Config, name + ": channels must be >= 1");
    LayerSpec s;
    s.kind = LayerKind::BatchNorm;
    s.name = name;
    s.in_channels = channels;
    s.out_channels = channels;
    return s;
}

LayerSpec relu_spec() {
    LayerSpec s;
    s.kind = LayerKind::Relu;
    return s;
}

LayerSpec elu_spec() {
    LayerSpec s;
    s.kind = LayerKind::Elu;
    return s;
}

LayerSpec pool_spec(int factor) {
    require(factor >= 1, ErrorCode::Config, "pool factor must be >= 1");
    LayerSpec s;
    s.kind = LayerKind::AvgPool;
    s.kernel = factor;
    s.stride = factor;
    return s;
}

LayerSpec attention_spec() {
    LayerSpec s;
    s.kind = LayerKind::SoftmaxAttention;
    return s;
}

ParamStore::Entry& ParamStore::add(const std::string& name, size_t size, bool learnable) {
    require(!has(name), ErrorCode::State, "duplicate parameter entry: " + name);
    index[name] = static_cast<int>(entries.size());
    entries.push_back(Entry{name, std::vector<double>(size, 0.0), learnable});
    return entries.back();
}

ParamStore::Entry& ParamStore::get(const std::string& name) {
    auto it = index.find(name);
    require(it != index.end(), ErrorCode::State, "missing parameter entry: " + name);
    return entries[it->second];
}

const ParamStore::Entry& ParamStore::get(const std::string& name) const {
    auto it = index.find(name);
    require(it != index.end(), ErrorCode::State, "missing parameter entry: " + name);
    return entries[it->second];
}

size_t ParamStore::learnable_count() const {
    size_t n = 0;
    for (const auto& e : entries) {
        if (e.learnable) n += e.values.size();
    }
    return n;
}

ParamStore ParamStore::zeros_like() const {
    ParamStore out;
    for (const auto& e : entries) out.add(e.name, e.values.size(), e.learnable);
    return out;
}

void ParamStore::fill(double v) {
    for (auto& e : entries) std::fill(e.values.begin(), e.values.end(), v);
}

void init_layer_params(const LayerSpec& spec, ParamStore& params, Rng& rng) {
    switch (spec.kind) {
        case LayerKind::Conv1d: {
            const size_t wsize = static_cast<size_t>(spec.out_channels) *
                                 spec.in_channels * spec.kernel;
            auto& w = params.add(spec.name + ".w", wsize);
            const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in_channels) *
                                                 spec.kernel);
            for (auto& v : w.values) v = rng.uniform(-bound, bound);
            params.add(spec.name + ".b", spec.out_channels);
            break;
        }
        case LayerKind::Deconv1d: {
            const size_t wsize = static_cast<size_t>(spec.in_channels) *
                                 spec.out_channels * spec.kernel;
            auto& w = params.add(spec.name + ".w", wsize);
            const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in_channels) *
                                                 spec.kernel);
            for (auto& v : w.values) v = rng.uniform(-bound, bound);
            params.add(spec.name + ".b", spec.out_channels);
            break;
        }
        case LayerKind::BatchNorm: {
            auto& scale = params.add(spec.name + ".scale", spec.in_channels);
            std::fill(scale.values.begin(), scale.values.end(), 1.0);
            params.add(spec.name + ".shift", spec.in_channels);
            params.add(spec.name + ".rmean", spec.in_channels, /*learnable=*/false);
            auto& rvar = params.add(spec.name + ".rvar", spec.in_channels,
                                    /*learnable=*/false);
            std::fill(rvar.values.begin(), rvar.values.end(), 1.0);
            break;
        }
        default:
            break;  // parameterless
    }
}

Tensor1d forward_layer(const LayerSpec& spec, const ParamStore& params,
                       const Tensor1d& x, Mode mode, LayerCache* cache) {
    check_in_channels(spec, x);
    if (cache) {
        cache->valid = true;
        cache->x = x;
        cache->mean.clear();
        cache->var.clear();
        cache->attn.clear();
    }

    switch (spec.kind) {
        case LayerKind::Conv1d: {
            const auto& w = params.values(spec.name + ".w");
            const auto& b = params.values(spec.name + ".b");
            const int lout = conv_out_length(spec, x.length);
            Tensor1d y(spec.out_channels, lout);
            for (int oc = 0; oc < spec.out_channels; ++oc) {
                for (int j = 0; j < lout; ++j) {
                    double acc = b[oc];
                    const int base = j * spec.stride - spec.padding;
                    for (int ic = 0; ic < spec.in_channels; ++ic) {
                        const double* wrow =
                            w.data() +
                            (static_cast<size_t>(oc) * spec.in_channels + ic) * spec.kernel;
                        const double* xrow = x.data.data() + static_cast<size_t>(ic) * x.length;
                        for (int kk = 0; kk < spec.kernel; ++kk) {
                            const int idx = base + kk;
                            if (idx >= 0 && idx < x.length) acc += wrow[kk] * xrow[idx];
                        }
                    }
                    y.at(oc, j) = acc;
                }
            }
            return y;
        }
        case LayerKind::Deconv1d: {
            const auto& w = params.values(spec.name + ".w");
            const auto& b = params.values(spec.name + ".b");
            const int lout = deconv_out_length(spec, x.length);
            Tensor1d y(spec.out_channels, lout);
            for (int oc = 0; oc < spec.out_channels; ++oc) {
                for (int j = 0; j < lout; ++j) y.at(oc, j) = b[oc];
            }
            for (int ic = 0; ic < spec.in_channels; ++ic) {
                const double* xrow = x.data.data() + static_cast<size_t>(ic) * x.length;
                for (int oc = 0; oc < spec.out_channels; ++oc) {
                    const double* wrow =
                        w.data() +
                        (static_cast<size_t>(ic) * spec.out_channels + oc) * spec.kernel;
                    double* yrow = y.data.data() + static_cast<size_t>(oc) * y.length;
                    for (int i = 0; i < x.length; ++i) {
                        const int base = i * spec.stride - spec.padding;
                        for (int kk = 0; kk < spec.kernel; ++kk) {
                            const int j = base + kk;
                            if (j >= 0 && j < lout) yrow[j] += wrow[kk] * xrow[i];
                        }
                    }
                }
            }
            return y;
        }
        case LayerKind::BatchNorm: {
            const auto& scale = params.values(spec.name + ".scale");
            const auto& shift = params.values(spec.name + ".shift");
            Tensor1d y(x.channels, x.length);
            std::vector<double> mean(x.channels), var(x.channels);
            if (mode == Mode::Train) {
                for (int c = 0; c < x.channels; ++c) {
                    double m = 0.0;
                    for (int i = 0; i < x.length; ++i) m += x.at(c, i);
                    m /= x.length;
                    double v = 0.0;
                    for (int i = 0; i < x.length; ++i) {
                        const double d = x.at(c, i) - m;
                        v += d * d;
                    }
                    v /= x.length;  // biased variance, standard for normalization
                    mean[c] = m;
                    var[c] = v;
                }
            } else {
                mean = params.values(spec.name + ".rmean");
                var = params.values(spec.name + ".rvar");
            }
            for (int c = 0; c < x.channels; ++c) {
                const double invstd = 1.0 / std::sqrt(var[c] + kBnEps);
                for (int i = 0; i < x.length; ++i) {
                    y.at(c, i) = scale[c] * (x.at(c, i) - mean[c]) * invstd + shift[c];
                }
            }
            if (cache && mode == Mode::Train) {
                cache->mean = std::move(mean);
                cache->var = std::move(var);
            }
            return y;
        }
        case LayerKind::Relu: {
            Tensor1d y(x.channels, x.length);
            for (size_t i = 0; i < x.data.size(); ++i) {
                y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
            }
            return y;
        }
        case LayerKind::Elu: {
            Tensor1d y(x.channels, x.length);
            for (size_t i = 0; i < x.data.size(); ++i) {
                const double v = x.data[i];
                y.data[i] = v > 0.0 ? v : kEluAlpha * (std::exp(v) - 1.0);
            }
            return y;
        }
        case LayerKind::AvgPool: {
            const int f = spec.kernel;
            if (f == 1) return x;
            require(x.length % f == 0, ErrorCode::Shape,
                    "pool factor " + std::to_string(f) + " does not divide length " +
                        std::to_string(x.length));
            Tensor1d y(x.channels, x.length / f);
            for (int c = 0; c < x.channels; ++c) {
                for (int j = 0; j < y.length; ++j) {
                    double acc = 0.0;
                    for (int kk = 0; kk < f; ++kk) acc += x.at(c, j * f + kk);
                    y.at(c, j) = acc / f;
                }
            }
            return y;
        }
        case LayerKind::SoftmaxAttention: {
            Tensor1d y = sdp_attention(x, x, x, cache ? &cache->attn : nullptr);
            return y;
        }
    }
    raise(ErrorCode::Internal, "unknown layer kind");
}

Tensor1d backward_layer(const LayerSpec& spec, const ParamStore& params,
                        const LayerCache& cache, const Tensor1d& dy,
                        ParamStore* dparams) {
    require(cache.valid, ErrorCode::State,
            "backward_layer requires the cache from a matching train-mode forward");
    const Tensor1d& x = cache.x;

    auto accum = [&](const std::string& name, size_t size) -> std::vector<double>& {
        if (!dparams->has(name)) dparams->add(name, size);
        return dparams->values(name);
    };

    switch (spec.kind) {
        case LayerKind::Conv1d: {
            const auto& w = params.values(spec.name + ".w");
            require(dparams != nullptr, ErrorCode::Argument, "dparams required");
            auto& dw = accum(spec.name + ".w", w.size());
            auto& db = accum(spec.name + ".b", spec.out_channels);
            Tensor1d dx(x.channels, x.length);
            for (int oc = 0; oc < spec.out_channels; ++oc) {
                for (int j = 0; j < dy.length; ++j) {
                    const double g = dy.at(oc, j);
                    if (g == 0.0) continue;
                    db[oc] += g;
                    const int base = j * spec.stride - spec.padding;
                    for (int ic = 0; ic < spec.in_channels; ++ic) {
                        const size_t woff =
                            (static_cast<size_t>(oc) * spec.in_channels + ic) * spec.kernel;
                        for (int kk = 0; kk < spec.kernel; ++kk) {
                            const int idx = base + kk;
                            if (idx >= 0 && idx < x.length) {
                                dw[woff + kk] += x.at(ic, idx) * g;
                                dx.at(ic, idx) += w[woff + kk] * g;
                            }
                        }
                    }
                }
            }
            return dx;
        }
        case LayerKind::Deconv1d: {
            const auto& w = params.values(spec.name + ".w");
            require(dparams != nullptr, ErrorCode::Argument, "dparams required");
            auto& dw = accum(spec.name + ".w", w.size());
            auto& db = accum(spec.name + ".b", spec.out_channels);
            for (int oc = 0; oc < spec.out_channels; ++oc) {
                for (int j = 0; j < dy.length; ++j) db[oc] += dy.at(oc, j);
            }
            Tensor1d dx(x.channels, x.length);
            for (int ic = 0; ic < spec.in_channels; ++ic) {
                for (int oc = 0; oc < spec.out_channels; ++oc) {
                    const size_t woff =
                        (static_cast<size_t>(ic) * spec.out_channels + oc) * spec.kernel;
                    for (int i = 0; i < x.length; ++i) {
                        const int base = i * spec.stride - spec.padding;
                        for (int kk = 0; kk < spec.kernel; ++kk) {
                            const int j = base + kk;
                            if (j >= 0 && j < dy.length) {
                                const double g = dy.at(oc, j);
                                dw[woff + kk] += x.at(ic, i) * g;
                                dx.at(ic, i) += w[woff + kk] * g;
                            }
                        }
                    }
                }
            }
            return dx;
        }
        case LayerKind::BatchNorm: {
            require(!cache.mean.empty(), ErrorCode::State,
                    "batchnorm backward requires train-mode statistics in the cache");
            require(dparams != nullptr, ErrorCode::Argument, "dparams required");
            const auto& scale = params.values(spec.name + ".scale");
            auto& dscale = accum(spec.name + ".scale", scale.size());
            auto& dshift = accum(spec.name + ".shift", scale.size());
            Tensor1d dx(x.channels, x.length);
            const int n = x.length;
            for (int c = 0; c < x.channels; ++c) {
                const double invstd = 1.0 / std::sqrt(cache.var[c] + kBnEps);
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int i = 0; i < n; ++i) {
                    const double xhat = (x.at(c, i) - cache.mean[c]) * invstd;
                    const double g = dy.at(c, i);
                    sum_dy += g;
                    sum_dy_xhat += g * xhat;
                    dscale[c] += g * xhat;
                    dshift[c] += g;
                }
                const double k1 = scale[c] * invstd;
                for (int i = 0; i < n; ++i) {
                    const double xhat = (x.at(c, i) - cache.mean[c]) * invstd;
                    dx.at(c, i) =
                        k1 * (dy.at(c, i) - sum_dy / n - xhat * sum_dy_xhat / n);
                }
            }
            return dx;
        }
        case LayerKind::Relu: {
            Tensor1d dx(x.channels, x.length);
            for (size_t i = 0; i < x.data.size(); ++i) {
                dx.data[i] = x.data[i] > 0.0 ? dy.data[i] : 0.0;
            }
            return dx;
        }
        case LayerKind::Elu: {
            Tensor1d dx(x.channels, x.length);
            for (size_t i = 0; i < x.data.size(); ++i) {
                const double v = x.data[i];
                dx.data[i] = v > 0.0 ? dy.data[i]
                                     : dy.data[i] * kEluAlpha * std::exp(v);
            }
            return dx;
        }
        case LayerKind::AvgPool: {
            const int f = spec.kernel;
            if (f == 1) return dy;
            Tensor1d dx(x.channels, x.length);
            for (int c = 0; c < x.channels; ++c) {
                for (int j = 0; j < dy.length; ++j) {
                    const double g = dy.at(c, j) / f;
                    for (int kk = 0; kk < f; ++kk) dx.at(c, j * f + kk) = g;
                }
            }
            return dx;
        }
        case LayerKind::SoftmaxAttention: {
            require(!cache.attn.empty(), ErrorCode::State,
                    "attention backward requires cached weights");
            Tensor1d dq(x.channels, x.length), dk(x.channels, x.length),
                dv(x.channels, x.length);
            sdp_attention_backward(x, x, x, cache.attn, dy, &dq, &dk, &dv);
            Tensor1d dx(x.channels, x.length);
            for (size_t i = 0; i < dx.data.size(); ++i) {
                dx.data[i] = dq.data[i] + dk.data[i] + dv.data[i];
            }
            return dx;
        }
    }
    raise(ErrorCode::Internal, "unknown layer kind");
}

void bn_update_running(ParamStore& params, const std::string& name,
                       const std::vector<double>& batch_mean,
                       const std::vector<double>& batch_var, double momentum) {
    auto& rmean = params.values(name + ".rmean");
    auto& rvar = params.values(name + ".rvar");
    require(rmean.size() == batch_mean.size() && rvar.size() == batch_var.size(),
            ErrorCode::Shape, name + ": running-statistic size mismatch");
    for (size_t c = 0; c < rmean.size(); ++c) {
        rmean[c] = momentum * rmean[c] + (1.0 - momentum) * batch_mean[c];
        rvar[c] = momentum * rvar[c] + (1.0 - momentum) * batch_var[c];
    }
}

Tensor1d sdp_attention(const Tensor1d& q, const Tensor1d& k, const Tensor1d& v,
                       std::vector<double>* weights) {
    require(q.length == k.length, ErrorCode::Shape,
            "attention: query/key dim mismatch");
    require(k.channels == v.channels, ErrorCode::Shape,
            "attention: key/value row-count mismatch");
    const int rq = q.channels, rk = k.channels, d = q.length;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    std::vector<double> w(static_cast<size_t>(rq) * rk);
    for (int i = 0; i < rq; ++i) {
        double* wrow = w.data() + static_cast<size_t>(i) * rk;
        double row_max = -1e300;
        for (int j = 0; j < rk; ++j) {
            double dot = 0.0;
            for (int t = 0; t < d; ++t) dot += q.at(i, t) * k.at(j, t);
            wrow[j] = dot * inv_sqrt_d;
            row_max = std::max(row_max, wrow[j]);
        }
        double denom = 0.0;
        for (int j = 0; j < rk; ++j) {
            wrow[j] = std::exp(wrow[j] - row_max);
            denom += wrow[j];
        }
        for (int j = 0; j < rk; ++j) wrow[j] /= denom;
    }

    Tensor1d out(rq, v.length);
    for (int i = 0; i < rq; ++i) {
        const double* wrow = w.data() + static_cast<size_t>(i) * rk;
        for (int t = 0; t < v.length; ++t) {
            double acc = 0.0;
            for (int j = 0; j < rk; ++j) acc += wrow[j] * v.at(j, t);
            out.at(i, t) = acc;
        }
    }
    if (weights) *weights = std::move(w);
    return out;
}

void sdp_attention_backward(const Tensor1d& q, const Tensor1d& k, const Tensor1d& v,
                            const std::vector<double>& weights, const Tensor1d& dout,
                            Tensor1d* dq, Tensor1d* dk, Tensor1d* dv) {
    const int rq = q.channels, rk = k.channels, d = q.length;
    require(weights.size() == static_cast<size_t>(rq) * rk, ErrorCode::Shape,
            "attention backward: weight matrix size mismatch");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    // dW = dout v^T; dv += W^T dout
    std::vector<double> dw(static_cast<size_t>(rq) * rk, 0.0);
    for (int i = 0; i < rq; ++i) {
        const double* wrow = weights.data() + static_cast<size_t>(i) * rk;
        double* dwrow = dw.data() + static_cast<size_t>(i) * rk;
        for (int j = 0; j < rk; ++j) {
            double acc = 0.0;
            for (int t = 0; t < v.length; ++t) acc += dout.at(i, t) * v.at(j, t);
            dwrow[j] = acc;
            for (int t = 0; t < v.length; ++t) {
                dv->at(j, t) += wrow[j] * dout.at(i, t);
            }
        }
    }

    // softmax rows: dA_ij = W_ij (dW_ij - sum_j' dW_ij' W_ij')
    std::vector<double> da(static_cast<size_t>(rq) * rk);
    for (int i = 0; i < rq; ++i) {
        const double* wrow = weights.data() + static_cast<size_t>(i) * rk;
        const double* dwrow = dw.data() + static_cast<size_t>(i) * rk;
        double inner = 0.0;
        for (int j = 0; j < rk; ++j) inner += dwrow[j] * wrow[j];
        double* darow = da.data() + static_cast<size_t>(i) * rk;
        for (int j = 0; j < rk; ++j) darow[j] = wrow[j] * (dwrow[j] - inner);
    }

    // A = q k^T / sqrt(d): dq += dA k / sqrt(d); dk += dA^T q / sqrt(d)
    for (int i = 0; i < rq; ++i) {
        const double* darow = da.data() + static_cast<size_t>(i) * rk;
        for (int j = 0; j < rk; ++j) {
            const double g = darow[j] * inv_sqrt_d;
            if (g == 0.0) continue;
            for (int t = 0; t < d; ++t) {
                dq->at(i, t) += g * k.at(j, t);
                dk->at(j, t) += g * q.at(i, t);
            }
        }
    }
}

GradCheckReport check_gradients(const std::function<double()>& loss,
                                const std::function<void()>& compute_grads,
                                const std::vector<GradCheckGroup>& groups,
                                int probes_per_group, double epsilon, uint64_t seed) {
    compute_grads();
    Rng rng(seed);
    GradCheckReport report;
    for (const auto& group : groups) {
        GradCheckReport::GroupResult result;
        result.name = group.name;
        const int n = static_cast<int>(group.size);
        std::vector<int> picks;
        if (n <= probes_per_group) {
            for (int i = 0; i < n; ++i) picks.push_back(i);
        } else {
            // distinct random coordinates
            std::vector<int> pool(n);
            for (int i = 0; i < n; ++i) pool[i] = i;
            for (int p = 0; p < probes_per_group; ++p) {
                const int r = p + rng.uniform_int(n - p);
                std::swap(pool[p], pool[r]);
                picks.push_back(pool[p]);
            }
        }
        for (int idx : picks) {
            const double original = group.values[idx];
            const double step = epsilon * std::max(1.0, std::fabs(original));
            group.values[idx] = original + step;
            const double f_plus = loss();
            group.values[idx] = original - step;
            const double f_minus = loss();
            group.values[idx] = original;
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double analytic = group.grads[idx];
            const double denom =
                std::max(std::fabs(analytic) + std::fabs(numeric), 1e-4);
            const double rel = std::fabs(analytic - numeric) / denom;
            result.max_rel_error = std::max(result.max_rel_error, rel);
            ++result.probes;
        }
        report.max_rel_error = std::max(report.max_rel_error, result.max_rel_error);
        report.groups.push_back(std::move(result));
    }
    return report;
}

}  // namespace fastbvp
