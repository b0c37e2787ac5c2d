#include "core/srrn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <json.hpp>

namespace fastbvp {

namespace {

void require(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond) raise(code, msg);
}

nlohmann::json config_to_json_obj(const SrrnConfig& c) {
    nlohmann::json j;
    j["regions"] = c.regions;
    j["bands"] = nlohmann::json::array();
    for (const auto& b : c.bands) j["bands"].push_back({{"lo", b.lo}, {"hi", b.hi}});
    j["block_widths"] = c.block_widths;
    j["pool_factors"] = c.pool_factors;
    j["tmsc_kernels"] = c.tmsc_kernels;
    j["deconv_widths"] = c.deconv_widths;
    j["deconv_strides"] = c.deconv_strides;
    j["ssa_segments"] = c.ssa_segments;
    return j;
}

template <size_t N>
void read_int_array(const nlohmann::json& j, const std::string& key,
                    std::array<int, N>& out, const std::string& origin) {
    if (!j.contains(key)) return;
    const auto& arr = j.at(key);
    if (!arr.is_array() || arr.size() != N) {
        raise(ErrorCode::Schema, origin + ": '" + key + "' must be an array of " +
                                     std::to_string(N) + " integers");
    }
    for (size_t i = 0; i < N; ++i) {
        if (!arr[i].is_number_integer()) {
            raise(ErrorCode::Schema, origin + ": '" + key + "' must contain integers");
        }
        out[i] = arr[i].get<int>();
    }
}

SrrnConfig config_from_json_obj(const nlohmann::json& j, const std::string& origin) {
    if (!j.is_object()) raise(ErrorCode::Schema, origin + ": config must be a JSON object");
    static const char* known[] = {"regions",       "bands",         "block_widths",
                                  "pool_factors",  "tmsc_kernels",  "deconv_widths",
                                  "deconv_strides", "ssa_segments"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || (it.key() == k);
        if (!ok) raise(ErrorCode::Schema, origin + ": unknown config key '" + it.key() + "'");
    }
    SrrnConfig c;
    if (j.contains("regions")) {
        if (!j["regions"].is_number_integer()) {
            raise(ErrorCode::Schema, origin + ": 'regions' must be an integer");
        }
        c.regions = j["regions"].get<int>();
    }
    if (j.contains("bands")) {
        if (!j["bands"].is_array()) {
            raise(ErrorCode::Schema, origin + ": 'bands' must be an array");
        }
        c.bands.clear();
        for (const auto& item : j["bands"]) {
            if (!item.is_object() || !item.contains("lo") || !item.contains("hi") ||
                !item["lo"].is_number() || !item["hi"].is_number()) {
                raise(ErrorCode::Schema, origin + ": each band needs numeric lo and hi");
            }
            c.bands.push_back({item["lo"].get<double>(), item["hi"].get<double>()});
        }
    }
    read_int_array(j, "block_widths", c.block_widths, origin);
    read_int_array(j, "pool_factors", c.pool_factors, origin);
    read_int_array(j, "tmsc_kernels", c.tmsc_kernels, origin);
    read_int_array(j, "deconv_widths", c.deconv_widths, origin);
    read_int_array(j, "deconv_strides", c.deconv_strides, origin);
    if (j.contains("ssa_segments")) {
        if (!j["ssa_segments"].is_number_integer()) {
            raise(ErrorCode::Schema, origin + ": 'ssa_segments' must be an integer");
        }
        c.ssa_segments = j["ssa_segments"].get<int>();
    }
    c.validate();
    return c;
}

}  // namespace

void SrrnConfig::validate(int frames) const {
    require(regions >= 1, ErrorCode::Config, "regions must be >= 1");
    require(ssa_segments >= 1, ErrorCode::Config, "ssa_segments must be >= 1");
    for (int w : block_widths) require(w >= 1, ErrorCode::Config, "block widths must be >= 1");
    for (int w : deconv_widths) require(w >= 1, ErrorCode::Config, "deconv widths must be >= 1");
    for (int p : pool_factors) require(p >= 1, ErrorCode::Config, "pool factors must be >= 1");
    for (int s : deconv_strides) {
        require(s >= 1, ErrorCode::Config, "deconv strides must be >= 1");
    }
    require(tmsc_kernels == std::array<int, 3>{3, 5, 7}, ErrorCode::Config,
            "tmsc kernels are fixed to 3, 5, 7");
    if (!bands.empty()) {
        for (size_t a = 0; a < bands.size(); ++a) {
            require(bands[a].lo >= 0.0 && bands[a].hi > bands[a].lo, ErrorCode::Config,
                    "each band needs 0 <= lo < hi");
            for (size_t b = a + 1; b < bands.size(); ++b) {
                const double lo = std::max(bands[a].lo, bands[b].lo);
                const double hi = std::min(bands[a].hi, bands[b].hi);
                require(lo >= hi, ErrorCode::Config, "bands must be pairwise disjoint");
            }
        }
    }

    int64_t pool_product = 1;
    for (int p : pool_factors) pool_product *= p;
    int64_t stride_product = 1;
    for (int s : deconv_strides) stride_product *= s;
    require(pool_product == stride_product, ErrorCode::Config,
            "product of deconv strides (" + std::to_string(stride_product) +
                ") must equal product of pool factors (" + std::to_string(pool_product) +
                ") so the output length is restored");

    if (frames > 0) {
        int len = frames;
        for (int r = 0; r < 4; ++r) {
            require(len % pool_factors[r] == 0, ErrorCode::Config,
                    "pool factor " + std::to_string(pool_factors[r]) +
                        " does not divide feature length " + std::to_string(len));
            len /= pool_factors[r];
        }
        for (int jx = 0; jx < 3; ++jx) {
            len *= deconv_strides[jx];
            require(len % ssa_segments == 0, ErrorCode::Config,
                    "feature length " + std::to_string(len) + " not divisible into " +
                        std::to_string(ssa_segments) + " segments");
            require(len / ssa_segments >= 2, ErrorCode::Config,
                    "segments would be shorter than 2 samples at feature length " +
                        std::to_string(len));
        }
        require(len == frames, ErrorCode::Config, "length bookkeeping failed");
    }
}

SrrnConfig parse_srrn_config_json(const std::string& text, const std::string& origin) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::Schema, origin + ": invalid JSON: " + e.what());
    }
    return config_from_json_obj(doc, origin);
}

std::string srrn_config_to_json(const SrrnConfig& config) {
    return config_to_json_obj(config).dump(2) + "\n";
}

SrrnLayout make_layout(const SrrnConfig& c) {
    c.validate();
    SrrnLayout layout;
    int in_ch = c.input_channels();
    for (int r = 0; r < 4; ++r) {
        const std::string base = "refine" + std::to_string(r + 1);
        const int w = c.block_widths[r];
        layout.refine[r].conv = conv_spec(base + ".conv", in_ch, w, 3);
        layout.refine[r].bn = bn_spec(base + ".bn", w);
        for (int b = 0; b < 3; ++b) {
            layout.refine[r].tmsc[b] = conv_spec(
                base + ".tmsc.k" + std::to_string(c.tmsc_kernels[b]), w, w,
                c.tmsc_kernels[b]);
        }
        layout.refine[r].pool = pool_spec(c.pool_factors[r]);
        in_ch = 3 * w;
    }
    for (int jx = 0; jx < 3; ++jx) {
        const std::string base = "recon" + std::to_string(jx + 1);
        const int w = c.deconv_widths[jx];
        const int s = c.deconv_strides[jx];
        layout.recon[jx].deconv =
            (s == 1) ? deconv_spec(base + ".deconv", in_ch, w, 3, 1, 1)
                     : deconv_spec(base + ".deconv", in_ch, w, s, s, 0);
        layout.recon[jx].bn = bn_spec(base + ".bn", w);
        layout.recon[jx].ssa_conv_a = conv_spec(base + ".ssa.conv_a", w, w, 3);
        layout.recon[jx].ssa_conv_b = conv_spec(base + ".ssa.conv_b", w, w, 3);
        in_ch = w;
    }
    layout.head = conv_spec("head", in_ch, 1, 1, 1, 0);
    return layout;
}

SrrnModel make_model(const SrrnConfig& config, uint64_t seed) {
    config.validate();
    const SrrnLayout layout = make_layout(config);
    SrrnModel model;
    model.config = config;
    Rng rng(split_seed(seed, 0x6d6f64656cULL));
    for (const auto& blk : layout.refine) {
        init_layer_params(blk.conv, model.params, rng);
        init_layer_params(blk.bn, model.params, rng);
        for (const auto& t : blk.tmsc) init_layer_params(t, model.params, rng);
    }
    for (const auto& blk : layout.recon) {
        init_layer_params(blk.deconv, model.params, rng);
        init_layer_params(blk.bn, model.params, rng);
        init_layer_params(blk.ssa_conv_a, model.params, rng);
        init_layer_params(blk.ssa_conv_b, model.params, rng);
    }
    init_layer_params(layout.head, model.params, rng);
    return model;
}

size_t count_params(const SrrnConfig& config) {
    return make_model(config, 0).params.learnable_count();
}

namespace {

int64_t conv_flops(const LayerSpec& s, int out_length) {
    return 2LL * s.kernel * s.in_channels * s.out_channels * out_length;
}

int64_t ssa_flops(int channels, int length, int segments) {
    const int64_t c = channels, l = length, s = segments, m = length / segments;
    int64_t total = 0;
    total += 2 * m * m * s * c;  // per-segment transforms
    total += 2 * s * s * m * c;  // attention logits
    total += 3 * s * s * c;      // softmax
    total += 2 * s * s * m * c;  // attention-weighted combination
    total += 2 * 3 * c * c * l;  // global conv a
    total += c * l;              // relu
    total += 2 * 3 * c * c * l;  // global conv b
    total += c * l;              // gain mean-pool
    total += 4 * c * s;          // sigmoid
    total += c * l;              // reweighting
    return total;
}

}  // namespace

std::vector<FlopItem> flops_breakdown(const SrrnConfig& c, int frames) {
    c.validate(frames);
    std::vector<FlopItem> items;
    const int64_t t2 = static_cast<int64_t>(frames) * frames;
    const int traces = c.regions * 3;
    if (c.bands_count() > 0) {
        items.push_back({"decompose.dct", 2 * t2 * traces});
        items.push_back({"decompose.idct", 2 * t2 * traces * c.bands_count()});
    }
    const SrrnLayout layout = make_layout(c);
    int len = frames;
    for (int r = 0; r < 4; ++r) {
        const std::string base = "refine" + std::to_string(r + 1);
        const auto& blk = layout.refine[r];
        const int w = c.block_widths[r];
        items.push_back({base + ".conv", conv_flops(blk.conv, len)});
        items.push_back({base + ".bn", 2LL * w * len});
        items.push_back({base + ".relu", static_cast<int64_t>(w) * len});
        int64_t tmsc = 0;
        for (const auto& tspec : blk.tmsc) tmsc += conv_flops(tspec, len);
        items.push_back({base + ".tmsc", tmsc});
        const int f = c.pool_factors[r];
        items.push_back({base + ".pool", f > 1 ? 3LL * w * len : 0});
        len /= f;
    }
    for (int jx = 0; jx < 3; ++jx) {
        const std::string base = "recon" + std::to_string(jx + 1);
        const auto& blk = layout.recon[jx];
        const int w = c.deconv_widths[jx];
        // each input element feeds kernel taps per (in, out) pair
        items.push_back({base + ".deconv",
                         2LL * blk.deconv.kernel * blk.deconv.in_channels * w * len});
        len *= c.deconv_strides[jx];
        items.push_back({base + ".bn", 2LL * w * len});
        items.push_back({base + ".elu", static_cast<int64_t>(w) * len});
        items.push_back({base + ".ssa", ssa_flops(w, len, c.ssa_segments)});
    }
    items.push_back({"head", conv_flops(layout.head, len)});
    return items;
}

int64_t count_flops(const SrrnConfig& config, int frames) {
    int64_t total = 0;
    for (const auto& item : flops_breakdown(config, frames)) total += item.flops;
    return total;
}

Tensor1d tmsc_forward(const std::array<LayerSpec, 3>& branches, const ParamStore& params,
                      const Tensor1d& x, Mode mode, TmscCache* cache) {
    std::array<Tensor1d, 3> outs;
    for (int b = 0; b < 3; ++b) {
        outs[b] = forward_layer(branches[b], params, x, mode,
                                cache ? &cache->branches[b] : nullptr);
    }
    const int w = outs[0].channels;
    Tensor1d y(3 * w, x.length);
    for (int b = 0; b < 3; ++b) {
        std::copy(outs[b].data.begin(), outs[b].data.end(),
                  y.data.begin() + static_cast<size_t>(b) * w * x.length);
    }
    return y;
}

Tensor1d tmsc_backward(const std::array<LayerSpec, 3>& branches, const ParamStore& params,
                       const TmscCache& cache, const Tensor1d& dy, ParamStore* dparams) {
    const int w = branches[0].out_channels;
    const int length = dy.length;
    require(dy.channels == 3 * w, ErrorCode::Shape, "tmsc backward channel mismatch");
    Tensor1d dx;
    for (int b = 0; b < 3; ++b) {
        Tensor1d dyb(w, length);
        std::copy(dy.data.begin() + static_cast<size_t>(b) * w * length,
                  dy.data.begin() + static_cast<size_t>(b + 1) * w * length,
                  dyb.data.begin());
        Tensor1d dxb = backward_layer(branches[b], params, cache.branches[b], dyb, dparams);
        if (b == 0) {
            dx = std::move(dxb);
        } else {
            for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dxb.data[i];
        }
    }
    return dx;
}

Tensor1d ssa_forward(const LayerSpec& conv_a, const LayerSpec& conv_b,
                     const ParamStore& params, const Tensor1d& x, int segments,
                     Mode mode, SsaCache* cache) {
    const int c_count = x.channels, length = x.length;
    require(segments >= 1, ErrorCode::Config, "ssa needs >= 1 segment");
    require(length % segments == 0, ErrorCode::Config,
            "feature length " + std::to_string(length) + " not divisible into " +
                std::to_string(segments) + " segments");
    const int m = length / segments;
    require(m >= 2, ErrorCode::Config, "ssa segment length must be >= 2");

    std::vector<double> spectra(static_cast<size_t>(c_count) * segments * m);
    std::vector<double> attn(static_cast<size_t>(c_count) * segments * segments);
    Tensor1d attended(c_count, length);

    for (int c = 0; c < c_count; ++c) {
        Tensor1d f(segments, m);
        for (int s = 0; s < segments; ++s) {
            dct_vec(x.data.data() + static_cast<size_t>(c) * length + s * m,
                    f.data.data() + static_cast<size_t>(s) * m, m);
        }
        std::copy(f.data.begin(), f.data.end(),
                  spectra.begin() + static_cast<size_t>(c) * segments * m);
        std::vector<double> weights;
        Tensor1d g = sdp_attention(f, f, f, &weights);
        std::copy(weights.begin(), weights.end(),
                  attn.begin() + static_cast<size_t>(c) * segments * segments);
        std::copy(g.data.begin(), g.data.end(),
                  attended.data.begin() + static_cast<size_t>(c) * length);
    }

    LayerCache cache_a, cache_r, cache_b;
    Tensor1d a = forward_layer(conv_a, params, attended, mode, cache ? &cache_a : nullptr);
    Tensor1d r = forward_layer(relu_spec(), params, a, mode, cache ? &cache_r : nullptr);
    Tensor1d z = forward_layer(conv_b, params, r, mode, cache ? &cache_b : nullptr);

    std::vector<double> gain(static_cast<size_t>(c_count) * segments);
    Tensor1d y(c_count, length);
    for (int c = 0; c < c_count; ++c) {
        for (int s = 0; s < segments; ++s) {
            double u = 0.0;
            for (int j = 0; j < m; ++j) u += z.at(c, s * m + j);
            u /= m;
            const double g = 1.0 / (1.0 + std::exp(-u));
            gain[static_cast<size_t>(c) * segments + s] = g;
            for (int j = 0; j < m; ++j) {
                y.at(c, s * m + j) = x.at(c, s * m + j) * g;
            }
        }
    }

    if (cache) {
        cache->valid = true;
        cache->x = x;
        cache->segments = segments;
        cache->seg_len = m;
        cache->spectra = std::move(spectra);
        cache->attn = std::move(attn);
        cache->conv_a = std::move(cache_a);
        cache->relu = std::move(cache_r);
        cache->conv_b = std::move(cache_b);
        cache->gain = std::move(gain);
    }
    return y;
}

Tensor1d ssa_backward(const LayerSpec& conv_a, const LayerSpec& conv_b,
                      const ParamStore& params, const SsaCache& cache,
                      const Tensor1d& dy, ParamStore* dparams) {
    require(cache.valid, ErrorCode::State, "ssa backward requires a forward cache");
    const Tensor1d& x = cache.x;
    const int c_count = x.channels, length = x.length;
    const int segments = cache.segments, m = cache.seg_len;
    require(dy.channels == c_count && dy.length == length, ErrorCode::Shape,
            "ssa backward shape mismatch");

    Tensor1d dx(c_count, length);
    Tensor1d dz(c_count, length);
    for (int c = 0; c < c_count; ++c) {
        for (int s = 0; s < segments; ++s) {
            const double g = cache.gain[static_cast<size_t>(c) * segments + s];
            double dgain = 0.0;
            for (int j = 0; j < m; ++j) {
                const int idx = s * m + j;
                dgain += dy.at(c, idx) * x.at(c, idx);
                dx.at(c, idx) = dy.at(c, idx) * g;  // direct reweighting path
            }
            const double du = dgain * g * (1.0 - g) / m;
            for (int j = 0; j < m; ++j) dz.at(c, s * m + j) = du;
        }
    }

    Tensor1d dr = backward_layer(conv_b, params, cache.conv_b, dz, dparams);
    Tensor1d da = backward_layer(relu_spec(), params, cache.relu, dr, dparams);
    Tensor1d d_attended = backward_layer(conv_a, params, cache.conv_a, da, dparams);

    std::vector<double> seg_grad(m);
    for (int c = 0; c < c_count; ++c) {
        Tensor1d f(segments, m), dg(segments, m);
        std::copy(cache.spectra.begin() + static_cast<size_t>(c) * segments * m,
                  cache.spectra.begin() + static_cast<size_t>(c + 1) * segments * m,
                  f.data.begin());
        std::copy(d_attended.data.begin() + static_cast<size_t>(c) * length,
                  d_attended.data.begin() + static_cast<size_t>(c + 1) * length,
                  dg.data.begin());
        std::vector<double> weights(
            cache.attn.begin() + static_cast<size_t>(c) * segments * segments,
            cache.attn.begin() + static_cast<size_t>(c + 1) * segments * segments);
        Tensor1d dq(segments, m), dk(segments, m), dv(segments, m);
        sdp_attention_backward(f, f, f, weights, dg, &dq, &dk, &dv);
        for (int s = 0; s < segments; ++s) {
            std::vector<double> df(m);
            for (int j = 0; j < m; ++j) {
                df[j] = dq.at(s, j) + dk.at(s, j) + dv.at(s, j);
            }
            idct_vec(df.data(), seg_grad.data(), m);
            for (int j = 0; j < m; ++j) dx.at(c, s * m + j) += seg_grad[j];
        }
    }
    return dx;
}

Tensor1d assemble_input(const StMap& map, const MultiBandSignal* bands,
                        const SrrnConfig& config) {
    require(map.color_space == ColorSpace::MYUV, ErrorCode::State,
            "model input requires a color-converted (mYUV) map");
    require(map.regions == config.regions, ErrorCode::Shape,
            "map has " + std::to_string(map.regions) + " regions, config expects " +
                std::to_string(config.regions));
    const int k = config.bands_count();
    if (k == 0) {
        require(bands == nullptr, ErrorCode::Argument,
                "config has no bands but a multi-band signal was supplied");
    } else {
        require(bands != nullptr, ErrorCode::Argument,
                "config has bands but no multi-band signal was supplied");
        require(static_cast<int>(bands->band_defs.size()) == k, ErrorCode::Shape,
                "multi-band signal has " + std::to_string(bands->band_defs.size()) +
                    " bands, config expects " + std::to_string(k));
        require(bands->regions == map.regions && bands->frames == map.frames,
                ErrorCode::Shape, "multi-band signal shape does not match the map");
        for (int i = 0; i < k; ++i) {
            require(bands->band_defs[i].lo == config.bands[i].lo &&
                        bands->band_defs[i].hi == config.bands[i].hi,
                    ErrorCode::Config, "band definitions do not match the model config");
        }
    }

    const int per_source = map.regions * 3;
    Tensor1d input(config.input_channels(), map.frames);
    for (int i = 0; i < map.regions; ++i) {
        for (int c = 0; c < 3; ++c) {
            for (int t = 0; t < map.frames; ++t) {
                input.at(i * 3 + c, t) = map.at(i, c, t);
            }
        }
    }
    for (int b = 0; b < k; ++b) {
        const auto& entry = bands->bands[b];
        double* dst = input.data.data() +
                      (static_cast<size_t>(per_source) * (b + 1)) * map.frames;
        std::copy(entry.begin(), entry.end(), dst);
    }
    return input;
}

Tensor1d srrn_forward_tensor(const SrrnModel& model, const Tensor1d& input, Mode mode,
                             SrrnTape* tape) {
    const SrrnLayout layout = make_layout(model.config);
    require(input.channels == model.config.input_channels(), ErrorCode::Shape,
            "input has " + std::to_string(input.channels) + " channels, model expects " +
                std::to_string(model.config.input_channels()));
    model.config.validate(input.length);

    Tensor1d x = input;
    for (int r = 0; r < 4; ++r) {
        const auto& blk = layout.refine[r];
        auto* t = tape ? &tape->refine[r] : nullptr;
        x = forward_layer(blk.conv, model.params, x, mode, t ? &t->conv : nullptr);
        x = forward_layer(blk.bn, model.params, x, mode, t ? &t->bn : nullptr);
        x = forward_layer(relu_spec(), model.params, x, mode, t ? &t->relu : nullptr);
        x = tmsc_forward(blk.tmsc, model.params, x, mode, t ? &t->tmsc : nullptr);
        x = forward_layer(blk.pool, model.params, x, mode, t ? &t->pool : nullptr);
    }
    for (int jx = 0; jx < 3; ++jx) {
        const auto& blk = layout.recon[jx];
        auto* t = tape ? &tape->recon[jx] : nullptr;
        x = forward_layer(blk.deconv, model.params, x, mode, t ? &t->deconv : nullptr);
        x = forward_layer(blk.bn, model.params, x, mode, t ? &t->bn : nullptr);
        x = forward_layer(elu_spec(), model.params, x, mode, t ? &t->elu : nullptr);
        x = ssa_forward(blk.ssa_conv_a, blk.ssa_conv_b, model.params, x,
                        model.config.ssa_segments, mode, t ? &t->ssa : nullptr);
    }
    x = forward_layer(layout.head, model.params, x, mode, tape ? &tape->head : nullptr);
    if (tape) tape->valid = true;
    return x;
}

BvpSignal srrn_forward(const SrrnModel& model, const StMap& map,
                       const MultiBandSignal* bands, Mode mode, SrrnTape* tape) {
    const Tensor1d input = assemble_input(map, bands, model.config);
    Tensor1d y = srrn_forward_tensor(model, input, mode, tape);
    BvpSignal out;
    out.sample_rate = map.sample_rate;
    out.samples.assign(y.data.begin(), y.data.end());
    if (!all_finite(out.samples)) {
        raise(ErrorCode::Internal, "model produced a non-finite output");
    }
    return out;
}

Tensor1d srrn_backward(const SrrnModel& model, const SrrnTape& tape,
                       const Tensor1d& dout, ParamStore* dparams) {
    require(tape.valid, ErrorCode::State, "backward requires a train-mode tape");
    const SrrnLayout layout = make_layout(model.config);

    Tensor1d dx = backward_layer(layout.head, model.params, tape.head, dout, dparams);
    for (int jx = 2; jx >= 0; --jx) {
        const auto& blk = layout.recon[jx];
        const auto& t = tape.recon[jx];
        dx = ssa_backward(blk.ssa_conv_a, blk.ssa_conv_b, model.params, t.ssa, dx, dparams);
        dx = backward_layer(elu_spec(), model.params, t.elu, dx, dparams);
        dx = backward_layer(blk.bn, model.params, t.bn, dx, dparams);
        dx = backward_layer(blk.deconv, model.params, t.deconv, dx, dparams);
    }
    for (int r = 3; r >= 0; --r) {
        const auto& blk = layout.refine[r];
        const auto& t = tape.refine[r];
        dx = backward_layer(blk.pool, model.params, t.pool, dx, dparams);
        dx = tmsc_backward(blk.tmsc, model.params, t.tmsc, dx, dparams);
        dx = backward_layer(relu_spec(), model.params, t.relu, dx, dparams);
        dx = backward_layer(blk.bn, model.params, t.bn, dx, dparams);
        dx = backward_layer(blk.conv, model.params, t.conv, dx, dparams);
    }
    return dx;
}

std::vector<AttentionSnapshot> collect_attention(const SrrnTape& tape) {
    std::vector<AttentionSnapshot> out;
    for (int jx = 0; jx < 3; ++jx) {
        const auto& ssa = tape.recon[jx].ssa;
        if (!ssa.valid || ssa.attn.empty()) continue;
        AttentionSnapshot snap;
        snap.block = jx + 1;
        snap.segments = ssa.segments;
        snap.channels = static_cast<int>(ssa.attn.size() /
                                         (static_cast<size_t>(ssa.segments) * ssa.segments));
        snap.weights = ssa.attn;
        out.push_back(std::move(snap));
    }
    return out;
}

// --- checkpoint i/o ----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'B', 'V', 'P', 'C', 'K', 'P', '1'};

void put_u32_le(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

void save_model(const SrrnModel& model, const std::string& path) {
    nlohmann::json manifest;
    manifest["format"] = 1;
    manifest["config"] = config_to_json_obj(model.config);
    manifest["entries"] = nlohmann::json::array();
    size_t offset = 0;
    for (const auto& e : model.params.entries) {
        manifest["entries"].push_back({{"name", e.name},
                                       {"size", e.values.size()},
                                       {"learnable", e.learnable},
                                       {"offset", offset}});
        offset += e.values.size() * 4;
    }
    manifest["blob_bytes"] = offset;
    const std::string manifest_text = manifest.dump();

    std::string file;
    file.reserve(12 + manifest_text.size() + offset);
    file.append(kMagic, sizeof(kMagic));
    put_u32_le(file, static_cast<uint32_t>(manifest_text.size()));
    file += manifest_text;
    for (const auto& e : model.params.entries) {
        for (double d : e.values) {
            const float f = static_cast<float>(d);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32_le(file, bits);
        }
    }
    write_text_file(path, file);
}

SrrnModel load_model(const std::string& path) {
    const std::string file = read_text_file(path);
    require(file.size() >= 12, ErrorCode::Schema, path + ": truncated checkpoint");
    require(std::memcmp(file.data(), kMagic, sizeof(kMagic)) == 0, ErrorCode::Schema,
            path + ": not a checkpoint file (bad magic)");
    const auto* bytes = reinterpret_cast<const unsigned char*>(file.data());
    const uint32_t manifest_len = get_u32_le(bytes + 8);
    require(12 + static_cast<size_t>(manifest_len) <= file.size(), ErrorCode::Schema,
            path + ": manifest length exceeds file size");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(file.substr(12, manifest_len));
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::Schema, path + ": invalid checkpoint manifest: " + e.what());
    }
    require(manifest.value("format", 0) == 1, ErrorCode::Schema,
            path + ": unsupported checkpoint format");

    const SrrnConfig config = config_from_json_obj(manifest.at("config"), path);
    SrrnModel model = make_model(config, 0);

    const auto& entries = manifest.at("entries");
    require(entries.is_array() && entries.size() == model.params.entries.size(),
            ErrorCode::Schema, path + ": checkpoint entry list does not match the config");
    const size_t blob_start = 12 + manifest_len;
    const size_t blob_bytes = manifest.value("blob_bytes", size_t{0});
    require(blob_start + blob_bytes == file.size(), ErrorCode::Schema,
            path + ": blob size does not match file size");

    for (size_t i = 0; i < entries.size(); ++i) {
        const auto& ej = entries[i];
        auto& entry = model.params.entries[i];
        require(ej.value("name", "") == entry.name, ErrorCode::Schema,
                path + ": unexpected entry '" + ej.value("name", "") + "', expected '" +
                    entry.name + "'");
        require(ej.value("size", size_t{0}) == entry.values.size(), ErrorCode::Schema,
                path + ": size mismatch for entry '" + entry.name + "'");
        const size_t offset = ej.value("offset", size_t{0});
        require(offset + entry.values.size() * 4 <= blob_bytes, ErrorCode::Schema,
                path + ": entry '" + entry.name + "' overruns the blob");
        const unsigned char* src = bytes + blob_start + offset;
        for (size_t v = 0; v < entry.values.size(); ++v) {
            const uint32_t bits = get_u32_le(src + v * 4);
            float f;
            std::memcpy(&f, &bits, 4);
            require(std::isfinite(f), ErrorCode::Data,
                    path + ": non-finite parameter in entry '" + entry.name + "'");
            entry.values[v] = static_cast<double>(f);
        }
    }
    return model;
}

}  // namespace fastbvp
