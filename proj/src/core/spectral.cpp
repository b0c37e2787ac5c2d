#include "core/spectral.hpp"

#include <cmath>
#include <memory>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace fastbvp {

namespace {

// Scaled cosine basis for length N, laid out row-major as basis[u * N + n] =
// a(u) * cos(pi * (2n + 1) * u / (2N)) with a(0) = sqrt(1/N), a(u>0) =
// sqrt(2/N).  The same matrix drives both directions: forward is basis * x,
// inverse is basis^T * c.  Cached per length because training re-transforms
// traces of the same length constantly.
std::shared_ptr<const std::vector<double>> basis_for(int n) {
    static std::mutex mutex;
    static std::unordered_map<int, std::shared_ptr<const std::vector<double>>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    auto basis = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * n);
    const double a0 = std::sqrt(1.0 / n);
    const double au = std::sqrt(2.0 / n);
    for (int u = 0; u < n; ++u) {
        const double scale = (u == 0) ? a0 : au;
        for (int t = 0; t < n; ++t) {
            (*basis)[static_cast<size_t>(u) * n + t] =
                scale * std::cos(M_PI * (2.0 * t + 1.0) * u / (2.0 * n));
        }
    }
    cache.emplace(n, basis);
    return basis;
}

// Smallest half-open coefficient range [u_lo, u_hi) whose bin frequencies
// u * fs / (2N) fall inside [band.lo, band.hi).
void bin_range(const FrequencyBand& band, double sample_rate, int n,
               int* u_lo, int* u_hi) {
    const double hz_per_bin = sample_rate / (2.0 * n);
    int lo = static_cast<int>(std::ceil(band.lo / hz_per_bin - 1e-9));
    int hi = static_cast<int>(std::ceil(band.hi / hz_per_bin - 1e-9));
    if (lo < 0) lo = 0;
    if (hi > n) hi = n;
    if (hi < lo) hi = lo;
    *u_lo = lo;
    *u_hi = hi;
}

void validate_one_band(const FrequencyBand& band, double sample_rate) {
    if (!(band.lo >= 0.0) || !(band.hi > band.lo) || !(band.hi <= sample_rate / 2.0)) {
        raise(ErrorCode::Argument,
              "band [" + format_double(band.lo) + ", " + format_double(band.hi) +
                  ") must satisfy 0 <= lo < hi <= " + format_double(sample_rate / 2.0));
    }
}

}  // namespace

void dct_vec(const double* x, double* out, int n) {
    const auto basis = basis_for(n);
    for (int u = 0; u < n; ++u) {
        const double* row = basis->data() + static_cast<size_t>(u) * n;
        double acc = 0.0;
        for (int t = 0; t < n; ++t) acc += row[t] * x[t];
        out[u] = acc;
    }
}

void idct_vec(const double* coeffs, double* out, int n) {
    const auto basis = basis_for(n);
    for (int t = 0; t < n; ++t) out[t] = 0.0;
    for (int u = 0; u < n; ++u) {
        const double c = coeffs[u];
        if (c == 0.0) continue;  // exact skip; adding zero is a no-op
        const double* row = basis->data() + static_cast<size_t>(u) * n;
        for (int t = 0; t < n; ++t) out[t] += row[t] * c;
    }
}

Spectrum dct2(const std::vector<double>& signal, double sample_rate) {
    const int n = static_cast<int>(signal.size());
    if (n < 2) raise(ErrorCode::Argument, "dct2 needs a signal of length >= 2");
    if (!(sample_rate > 0.0)) raise(ErrorCode::Argument, "sample_rate must be positive");
    if (!all_finite(signal)) raise(ErrorCode::Data, "dct2 input contains non-finite values");

    Spectrum spectrum;
    spectrum.sample_rate = sample_rate;
    spectrum.coeffs.assign(n, 0.0);
    dct_vec(signal.data(), spectrum.coeffs.data(), n);
    return spectrum;
}

std::vector<double> idct2(const Spectrum& spectrum) {
    const int n = static_cast<int>(spectrum.coeffs.size());
    if (n < 2) raise(ErrorCode::Argument, "idct2 needs >= 2 coefficients");
    if (!all_finite(spectrum.coeffs)) {
        raise(ErrorCode::Data, "idct2 input contains non-finite values");
    }
    std::vector<double> signal(n, 0.0);
    idct_vec(spectrum.coeffs.data(), signal.data(), n);
    return signal;
}

std::vector<double> band_filter(const Spectrum& spectrum, const FrequencyBand& band,
                                bool* empty_band) {
    const int n = static_cast<int>(spectrum.coeffs.size());
    if (n < 2) raise(ErrorCode::Argument, "band_filter needs >= 2 coefficients");
    validate_one_band(band, spectrum.sample_rate);

    int u_lo = 0, u_hi = 0;
    bin_range(band, spectrum.sample_rate, n, &u_lo, &u_hi);
    if (empty_band) *empty_band = (u_lo == u_hi);
    if (u_lo == u_hi) {
        log_debug("band [" + format_double(band.lo) + ", " + format_double(band.hi) +
                  ") covers no coefficient bins at T=" + std::to_string(n));
    }

    // Accumulating only the kept bins (ascending u) produces bit-identical
    // output to zeroing the rest and running the full inverse transform,
    // because the skipped terms would contribute exact zeros.
    const auto basis = basis_for(n);
    std::vector<double> signal(n, 0.0);
    for (int u = u_lo; u < u_hi; ++u) {
        const double c = spectrum.coeffs[u];
        const double* row = basis->data() + static_cast<size_t>(u) * n;
        for (int t = 0; t < n; ++t) signal[t] += row[t] * c;
    }
    return signal;
}

void validate_bands(const std::vector<FrequencyBand>& bands, double sample_rate) {
    if (bands.empty()) raise(ErrorCode::Argument, "band set must not be empty");
    for (const auto& band : bands) validate_one_band(band, sample_rate);
    for (size_t a = 0; a < bands.size(); ++a) {
        for (size_t b = a + 1; b < bands.size(); ++b) {
            const double lo = std::max(bands[a].lo, bands[b].lo);
            const double hi = std::min(bands[a].hi, bands[b].hi);
            if (lo < hi) {
                raise(ErrorCode::Argument,
                      "bands [" + format_double(bands[a].lo) + ", " +
                          format_double(bands[a].hi) + ") and [" +
                          format_double(bands[b].lo) + ", " + format_double(bands[b].hi) +
                          ") overlap");
            }
        }
    }
}

MultiBandSignal decompose(const StMap& map, const std::vector<FrequencyBand>& bands,
                          int threads) {
    if (map.color_space != ColorSpace::MYUV) {
        raise(ErrorCode::State, "decompose expects a color-converted (mYUV) map");
    }
    validate_bands(bands, map.sample_rate);

    MultiBandSignal out;
    out.regions = map.regions;
    out.frames = map.frames;
    out.sample_rate = map.sample_rate;
    out.band_defs = bands;
    out.bands.assign(bands.size(),
                     std::vector<double>(static_cast<size_t>(map.regions) * 3 * map.frames));

    const int traces = map.regions * 3;
    parallel_for(traces, threads, [&](int trace) {
        const int region = trace / 3;
        const int channel = trace % 3;
        std::vector<double> x(map.frames);
        for (int t = 0; t < map.frames; ++t) x[t] = map.at(region, channel, t);
        const Spectrum spectrum = dct2(x, map.sample_rate);
        for (size_t k = 0; k < bands.size(); ++k) {
            const std::vector<double> filtered = band_filter(spectrum, bands[k]);
            double* dst = out.bands[k].data() +
                          (static_cast<size_t>(region) * 3 + channel) * map.frames;
            for (int t = 0; t < map.frames; ++t) dst[t] = filtered[t];
        }
    });
    return out;
}

std::vector<FrequencyBand> default_bands() {
    return {{0.0, 0.7}, {0.7, 1.5}, {1.5, 2.5}, {2.5, 4.0}};
}

std::vector<FrequencyBand> parse_bands_json(const std::string& text,
                                            const std::string& origin) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::Schema, origin + ": invalid JSON: " + e.what());
    }
    if (!doc.is_object() || !doc.contains("bands") || !doc["bands"].is_array()) {
        raise(ErrorCode::Schema, origin + ": expected {\"bands\": [{\"lo\",\"hi\"}...]}");
    }
    std::vector<FrequencyBand> bands;
    for (const auto& item : doc["bands"]) {
        if (!item.is_object() || !item.contains("lo") || !item.contains("hi") ||
            !item["lo"].is_number() || !item["hi"].is_number()) {
            raise(ErrorCode::Schema, origin + ": each band needs numeric lo and hi");
        }
        bands.push_back({item["lo"].get<double>(), item["hi"].get<double>()});
    }
    if (bands.empty()) raise(ErrorCode::Schema, origin + ": band list is empty");
    return bands;
}

std::string bands_to_json(const std::vector<FrequencyBand>& bands) {
    nlohmann::json doc;
    doc["bands"] = nlohmann::json::array();
    for (const auto& band : bands) {
        doc["bands"].push_back({{"lo", band.lo}, {"hi", band.hi}});
    }
    return doc.dump(2) + "\n";
}

}  // namespace fastbvp
