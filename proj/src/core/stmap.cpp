#include "core/stmap.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

namespace fastbvp {

namespace {

// Modified-YUV conversion matrix (rows: Y, U, V; columns: R, G, B).
constexpr double kYuv[3][3] = {
    {0.299, 0.587, 0.114},
    {-0.169, -0.331, 0.5},
    {0.5, -0.419, -0.081},
};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (ch != '\r') {
            cell.push_back(ch);
        }
    }
    cells.push_back(cell);
    return cells;
}

double parse_cell(const std::string& cell, const std::string& origin, int row) {
    if (cell.empty()) {
        raise(ErrorCode::Schema,
              origin + ": empty cell in row " + std::to_string(row));
    }
    char* end = nullptr;
    const double value = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size()) {
        raise(ErrorCode::Schema,
              origin + ": non-numeric cell '" + cell + "' in row " + std::to_string(row));
    }
    return value;
}

}  // namespace

const char* color_space_name(ColorSpace cs) {
    return cs == ColorSpace::RGB ? "RGB" : "mYUV";
}

StMap make_stmap(int regions, int frames, double sample_rate, ColorSpace color_space) {
    if (regions < 1) raise(ErrorCode::Argument, "stmap needs at least one region");
    if (frames < 2) raise(ErrorCode::Argument, "stmap needs at least two frames");
    if (!(sample_rate > 0.0)) raise(ErrorCode::Argument, "sample_rate must be positive");
    StMap map;
    map.regions = regions;
    map.frames = frames;
    map.sample_rate = sample_rate;
    map.color_space = color_space;
    map.data.assign(static_cast<size_t>(regions) * 3 * frames, 0.0);
    return map;
}

StMap load_stmap(const std::string& path, double sample_rate) {
    return parse_stmap_csv(read_text_file(path), sample_rate, path);
}

StMap parse_stmap_csv(const std::string& text, double sample_rate,
                      const std::string& origin) {
    if (!(sample_rate > 0.0)) raise(ErrorCode::Argument, "sample_rate must be positive");

    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        raise(ErrorCode::Schema, origin + ": empty file");
    }
    const auto header = split_csv_line(line);
    if (header.size() < 4 || header[0] != "frame" || (header.size() - 1) % 3 != 0) {
        raise(ErrorCode::Schema,
              origin + ": header must be frame,r1_R,r1_G,r1_B,...");
    }
    const int regions = static_cast<int>((header.size() - 1) / 3);
    static const char* kChannelSuffix[3] = {"_R", "_G", "_B"};
    for (int i = 0; i < regions; ++i) {
        for (int c = 0; c < 3; ++c) {
            const std::string expect = "r" + std::to_string(i + 1) + kChannelSuffix[c];
            if (header[1 + i * 3 + c] != expect) {
                raise(ErrorCode::Schema,
                      origin + ": unexpected column '" + header[1 + i * 3 + c] +
                          "', expected '" + expect + "'");
            }
        }
    }

    std::vector<double> values;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            raise(ErrorCode::Schema,
                  origin + ": row " + std::to_string(rows) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()));
        }
        const double frame_index = parse_cell(cells[0], origin, rows);
        if (frame_index != static_cast<double>(rows)) {
            raise(ErrorCode::Schema,
                  origin + ": frame column must count 0,1,2,... (row " +
                      std::to_string(rows) + ")");
        }
        for (size_t c = 1; c < cells.size(); ++c) {
            const double v = parse_cell(cells[c], origin, rows);
            if (!std::isfinite(v)) {
                raise(ErrorCode::Data,
                      origin + ": non-finite value in row " + std::to_string(rows));
            }
            if (v < 0.0 || v > 255.0) {
                raise(ErrorCode::Data,
                      origin + ": value " + format_double(v) +
                          " outside [0, 255] in row " + std::to_string(rows));
            }
            values.push_back(v);
        }
        ++rows;
    }

    if (rows < 2 * sample_rate) {
        raise(ErrorCode::Insufficient,
              origin + ": clip too short (" + std::to_string(rows) + " frames at " +
                  format_double(sample_rate) + " Hz; need at least 2 s)");
    }

    StMap map = make_stmap(regions, rows, sample_rate, ColorSpace::RGB);
    for (int t = 0; t < rows; ++t) {
        for (int i = 0; i < regions; ++i) {
            for (int c = 0; c < 3; ++c) {
                map.at(i, c, t) = values[static_cast<size_t>(t) * regions * 3 + i * 3 + c];
            }
        }
    }
    return map;
}

std::string stmap_to_csv(const StMap& map) {
    std::ostringstream out;
    out << "frame";
    static const char* kChannelSuffix[3] = {"_R", "_G", "_B"};
    for (int i = 0; i < map.regions; ++i) {
        for (int c = 0; c < 3; ++c) {
            out << ",r" << (i + 1) << kChannelSuffix[c];
        }
    }
    out << "\n";
    char buf[48];
    for (int t = 0; t < map.frames; ++t) {
        out << t;
        for (int i = 0; i < map.regions; ++i) {
            for (int c = 0; c < 3; ++c) {
                std::snprintf(buf, sizeof(buf), "%.8f", map.at(i, c, t));
                out << ',' << buf;
            }
        }
        out << "\n";
    }
    return out.str();
}

StMap csc_modified_yuv(const StMap& map) {
    if (map.color_space != ColorSpace::RGB) {
        raise(ErrorCode::State, "color conversion requires an RGB-tagged map");
    }
    StMap out = map;
    out.color_space = ColorSpace::MYUV;
    for (int i = 0; i < map.regions; ++i) {
        for (int t = 0; t < map.frames; ++t) {
            const double r = map.at(i, 0, t);
            const double g = map.at(i, 1, t);
            const double b = map.at(i, 2, t);
            for (int c = 0; c < 3; ++c) {
                out.at(i, c, t) = kYuv[c][0] * r + kYuv[c][1] * g + kYuv[c][2] * b;
            }
        }
    }
    return out;
}

StMap temporal_normalize(const StMap& map) {
    if (map.frames < 2) raise(ErrorCode::Argument, "normalization needs at least two frames");
    StMap out = map;
    for (int i = 0; i < map.regions; ++i) {
        for (int c = 0; c < 3; ++c) {
            double sum = 0.0;
            for (int t = 0; t < map.frames; ++t) sum += map.at(i, c, t);
            const double mean = sum / map.frames;
            double var = 0.0;
            for (int t = 0; t < map.frames; ++t) {
                const double d = map.at(i, c, t) - mean;
                var += d * d;
            }
            const double sd = std::sqrt(var / (map.frames - 1));
            if (sd < 1e-12) {
                for (int t = 0; t < map.frames; ++t) out.at(i, c, t) = 0.0;
            } else {
                for (int t = 0; t < map.frames; ++t) {
                    out.at(i, c, t) = (map.at(i, c, t) - mean) / sd;
                }
            }
        }
    }
    return out;
}

StMap add_white_noise(const StMap& map, double sigma, uint64_t seed) {
    if (sigma < 0.0) raise(ErrorCode::Argument, "noise sigma must be >= 0");
    StMap out = map;
    if (sigma == 0.0) return out;
    Rng rng(seed);
    // Fixed (region, channel, frame) consumption order keeps the stream
    // bit-reproducible for a given seed.
    for (int i = 0; i < map.regions; ++i) {
        for (int c = 0; c < 3; ++c) {
            for (int t = 0; t < map.frames; ++t) {
                out.at(i, c, t) += rng.gaussian(0.0, sigma);
            }
        }
    }
    return out;
}

}  // namespace fastbvp
