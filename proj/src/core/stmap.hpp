#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace fastbvp {

enum class ColorSpace { RGB, MYUV };

const char* color_space_name(ColorSpace cs);

// Per-region color traces: `regions` x 3 channels x `frames` samples.
struct StMap {
    int regions = 0;
    int frames = 0;
    double sample_rate = 0.0;
    ColorSpace color_space = ColorSpace::RGB;
    std::vector<double> data;  // layout: (region * 3 + channel) * frames + frame

    double& at(int region, int channel, int frame) {
        return data[(static_cast<size_t>(region) * 3 + channel) * frames + frame];
    }
    double at(int region, int channel, int frame) const {
        return data[(static_cast<size_t>(region) * 3 + channel) * frames + frame];
    }
};

StMap make_stmap(int regions, int frames, double sample_rate,
                 ColorSpace color_space = ColorSpace::RGB);

// CSV schema: header `frame,r1_R,r1_G,r1_B,...,rI_B`, one row per frame.
StMap load_stmap(const std::string& path, double sample_rate);
StMap parse_stmap_csv(const std::string& text, double sample_rate,
                      const std::string& origin);
std::string stmap_to_csv(const StMap& map);

// Fixed 3x3 color conversion applied to every (region, frame) RGB triple.
StMap csc_modified_yuv(const StMap& map);

// Per (region, channel) trace: subtract mean, divide by sample standard
// deviation. Constant traces become all zeros.
StMap temporal_normalize(const StMap& map);

// Adds i.i.d. zero-mean Gaussian noise, elementwise, deterministically.
StMap add_white_noise(const StMap& map, double sigma, uint64_t seed);

}  // namespace fastbvp
