#pragma once

#include <string>
#include <vector>

#include "core/stmap.hpp"

namespace fastbvp {

// Orthonormal DCT-II coefficients of a real trace.
struct Spectrum {
    std::vector<double> coeffs;  // length equals source signal length
    double sample_rate = 0.0;
};

struct FrequencyBand {
    double lo = 0.0;  // Hz, inclusive
    double hi = 0.0;  // Hz, exclusive
};

// One filtered I x 3 x T entry per band, sharing the source map's shape.
struct MultiBandSignal {
    int regions = 0;
    int frames = 0;
    double sample_rate = 0.0;
    std::vector<FrequencyBand> band_defs;
    std::vector<std::vector<double>> bands;  // each entry: regions * 3 * frames

    double at(int band, int region, int channel, int frame) const {
        return bands[band][(static_cast<size_t>(region) * 3 + channel) * frames + frame];
    }
};

Spectrum dct2(const std::vector<double>& signal, double sample_rate);
std::vector<double> idct2(const Spectrum& spectrum);

// Raw orthonormal transform pair on length-n buffers (no sample-rate
// bookkeeping); out must not alias x. The two maps are exact transposes of
// each other, so each is also the other's gradient map.
void dct_vec(const double* x, double* out, int n);
void idct_vec(const double* coeffs, double* out, int n);

// Coefficient index u covers u * sample_rate / (2T) Hz; bins inside
// [band.lo, band.hi) are kept, everything else is zeroed, and the result is
// returned in the time domain. `empty_band` (optional) reports whether the
// band covered no bins at all (the output is then all zeros).
std::vector<double> band_filter(const Spectrum& spectrum, const FrequencyBand& band,
                                bool* empty_band = nullptr);

void validate_bands(const std::vector<FrequencyBand>& bands, double sample_rate);

// Per region and channel: transform the trace once, then keep each band's
// bins and return to the time domain; one I x 3 x T entry per band.
MultiBandSignal decompose(const StMap& map, const std::vector<FrequencyBand>& bands,
                          int threads = 1);

std::vector<FrequencyBand> default_bands();
std::vector<FrequencyBand> parse_bands_json(const std::string& text,
                                            const std::string& origin);
std::string bands_to_json(const std::vector<FrequencyBand>& bands);

}  // namespace fastbvp
