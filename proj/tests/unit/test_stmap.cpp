#include <cmath>
#include <vector>

#include <doctest.h>

#include "core/stmap.hpp"
#include "helpers.hpp"

using namespace fastbvp;

namespace {

StMap ramp_map(int regions, int frames, double fs) {
    StMap m = make_stmap(regions, frames, fs, ColorSpace::RGB);
    for (int i = 0; i < regions; ++i)
        for (int c = 0; c < 3; ++c)
            for (int t = 0; t < frames; ++t)
                m.at(i, c, t) = 10.0 * i + 3.0 * c + 0.5 * t;
    return m;
}

}  // namespace

TEST_CASE("layout is region-major, channel, then frame") {
    StMap m = make_stmap(2, 3, 30.0, ColorSpace::RGB);
    m.at(1, 2, 0) = 7.0;
    CHECK(m.data[(1 * 3 + 2) * 3 + 0] == 7.0);
    CHECK(static_cast<int>(m.data.size()) == 2 * 3 * 3);
}

TEST_CASE("modified yuv matches the hand-computed primaries") {
    StMap m = make_stmap(1, 3, 30.0, ColorSpace::RGB);
    // frame 0: pure red, frame 1: pure green, frame 2: white
    double rgb[3][3] = {{255, 0, 0}, {0, 255, 0}, {255, 255, 255}};
    for (int t = 0; t < 3; ++t)
        for (int c = 0; c < 3; ++c) m.at(0, c, t) = rgb[t][c];

    StMap y = csc_modified_yuv(m);
    CHECK(y.color_space == ColorSpace::MYUV);
    CHECK(y.at(0, 0, 0) == doctest::Approx(76.245).epsilon(1e-12));
    CHECK(y.at(0, 1, 0) == doctest::Approx(-43.095).epsilon(1e-12));
    CHECK(y.at(0, 2, 0) == doctest::Approx(127.5).epsilon(1e-12));
    CHECK(y.at(0, 0, 1) == doctest::Approx(149.685).epsilon(1e-12));
    // white is achromatic: Y = 255, U = V = 0
    CHECK(y.at(0, 0, 2) == doctest::Approx(255.0).epsilon(1e-12));
    CHECK(y.at(0, 1, 2) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(y.at(0, 2, 2) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("csc requires an rgb map") {
    StMap m = make_stmap(1, 4, 30.0, ColorSpace::MYUV);
    CHECK(testutil::code_of([&] { csc_modified_yuv(m); }) == ErrorCode::State);
}

TEST_CASE("temporal normalization zero-means and unit-scales each trace") {
    StMap m = make_stmap(1, 3, 30.0, ColorSpace::RGB);
    for (int t = 0; t < 3; ++t) m.at(0, 0, t) = t + 1.0;  // 1 2 3
    for (int t = 0; t < 3; ++t) m.at(0, 1, t) = 5.0;      // constant
    for (int t = 0; t < 3; ++t) m.at(0, 2, t) = 2.0 * t;  // 0 2 4

    StMap n = temporal_normalize(m);
    CHECK(n.at(0, 0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(n.at(0, 0, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(n.at(0, 0, 2) == doctest::Approx(1.0).epsilon(1e-12));
    // constant traces become zero rather than dividing by zero
    CHECK(n.at(0, 1, 0) == 0.0);
    CHECK(n.at(0, 1, 2) == 0.0);
}

TEST_CASE("normalization uses sample scaling") {
    // trace 0 2 4: mean 2, sample std 2
    StMap m = make_stmap(1, 3, 30.0, ColorSpace::RGB);
    for (int t = 0; t < 3; ++t) m.at(0, 0, t) = 2.0 * t;
    StMap n = temporal_normalize(m);
    CHECK(n.at(0, 0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(n.at(0, 0, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(n.at(0, 0, 2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("csv round-trip preserves shape and values") {
    // the parser requires at least 2 s of data
    StMap m = ramp_map(3, 60, 25.0);
    std::string csv = stmap_to_csv(m);
    StMap back = parse_stmap_csv(csv, 25.0, "test");
    CHECK(back.regions == 3);
    CHECK(back.frames == 60);
    CHECK(back.sample_rate == 25.0);
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c)
            for (int t = 0; t < 60; ++t)
                CHECK(back.at(i, c, t) == doctest::Approx(m.at(i, c, t)).epsilon(1e-7));
}

TEST_CASE("csv parser rejects malformed input") {
    CHECK(testutil::code_of([] { parse_stmap_csv("", 30.0, "t"); }) == ErrorCode::Schema);
    CHECK(testutil::code_of([] {
              parse_stmap_csv("frame,r1_R\n0,1\n", 30.0, "t");
          }) == ErrorCode::Schema);
    // channel triple incomplete
    CHECK(testutil::code_of([] {
              parse_stmap_csv("frame,r1_R,r1_G\n0,1,2\n1,1,2\n", 30.0, "t");
          }) == ErrorCode::Schema);
    // ragged row
    CHECK(testutil::code_of([] {
              parse_stmap_csv("frame,r1_R,r1_G,r1_B\n0,1,2\n", 30.0, "t");
          }) == ErrorCode::Schema);
    // non-numeric cell
    CHECK(testutil::code_of([] {
              parse_stmap_csv("frame,r1_R,r1_G,r1_B\n0,1,x,3\n1,1,2,3\n", 30.0, "t");
          }) == ErrorCode::Schema);
    CHECK(testutil::code_of([] {
              parse_stmap_csv("frame,r1_R,r1_G,r1_B\n0,1,2,3\n1,1,2,3\n", 0.0, "t");
          }) == ErrorCode::Argument);
}

TEST_CASE("white noise augmentation is seeded and additive") {
    StMap m = ramp_map(2, 64, 30.0);
    StMap a = add_white_noise(m, 0.5, 99);
    StMap b = add_white_noise(m, 0.5, 99);
    StMap c = add_white_noise(m, 0.5, 100);
    CHECK(a.data == b.data);
    CHECK(a.data != c.data);

    double diff = 0.0;
    for (size_t k = 0; k < m.data.size(); ++k) diff += std::abs(a.data[k] - m.data[k]);
    CHECK(diff > 0.0);

    StMap zero = add_white_noise(m, 0.0, 99);
    CHECK(zero.data == m.data);
}

TEST_CASE("noise sigma scales the perturbation spread") {
    StMap m = make_stmap(4, 256, 30.0, ColorSpace::RGB);
    StMap a = add_white_noise(m, 0.3, 7);
    double sq = 0.0;
    for (size_t k = 0; k < a.data.size(); ++k) sq += a.data[k] * a.data[k];
    double sd = std::sqrt(sq / a.data.size());
    CHECK(sd == doctest::Approx(0.3).epsilon(0.08));
}
