// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "keasplat/kmedoids.hpp"

using namespace keasplat;

TEST_SUITE("kmedoids") {

namespace {

double total_distance(const std::vector<PixelCoord>& pts, const std::vector<PixelCoord>& medoids) {
    double td = 0.0;
    for (const auto& p : pts) {
        double best = 1e300;
        for (const auto& m : medoids) best = std::min(best, std::hypot(p.x - m.x, p.y - m.y));
        td += best;
    }
    return td;
}

std::vector<PixelCoord> foreground(const Mask& m) {
    std::vector<PixelCoord> pts;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y)) pts.push_back({x, y});
    return pts;
}

} // namespace

TEST_CASE("k = 1 on a disk returns the brute-force medoid") {
    Mask m(31, 31);
    for (int y = 0; y < 31; ++y)
        for (int x = 0; x < 31; ++x)
            if (std::hypot(x - 15.0, y - 14.0) <= 9.0) m.at(x, y) = 1;
    const auto pts = foreground(m);
    double best = 1e300;
    for (const auto& c : pts) best = std::min(best, total_distance(pts, {c}));
    const auto out = sample_query_points(m, 1, 3);
    REQUIRE(out.size() == 1);
    CHECK(total_distance(pts, out) == doctest::Approx(best));
    CHECK(std::hypot(out[0].x - 15.0, out[0].y - 14.0) <= 1.0);
}

TEST_CASE("k equal to the foreground size returns every pixel") {
    Mask m(6, 5);
    m.at(1, 1) = m.at(4, 1) = m.at(2, 3) = m.at(5, 4) = 1;
    const auto out = sample_query_points(m, 4, 0);
    CHECK(out == foreground(m));
}

TEST_CASE("two blobs with k = 2 get one medoid each, matching brute force") {
    Mask m(20, 20);
    for (int y = 2; y < 7; ++y)
        for (int x = 2; x < 6; ++x) m.at(x, y) = 1;
    for (int y = 12; y < 18; ++y)
        for (int x = 13; x < 19; ++x) m.at(x, y) = 1;
    const auto pts = foreground(m);
    double best = 1e300;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) best = std::min(best, total_distance(pts, {pts[i], pts[j]}));
    for (std::uint64_t seed : {0, 1, 2, 3}) {
        const auto out = sample_query_points(m, 2, seed);
        REQUIRE(out.size() == 2);
        CHECK(out[0].x < 6);
        CHECK(out[1].x >= 13);
        CHECK(total_distance(pts, out) == doctest::Approx(best));
    }
}

TEST_CASE("outputs translate with the mask and lie inside it") {
    Mask a(40, 30), b(40, 30);
    std::mt19937_64 rng(57);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int y = 3; y < 15; ++y)
        for (int x = 4; x < 20; ++x)
            if (u(rng) < 0.6) {
                a.at(x, y) = 1;
                b.at(x + 11, y + 9) = 1;
            }
    const auto pa = sample_query_points(a, 5, 8), pb = sample_query_points(b, 5, 8);
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pb[i].x == pa[i].x + 11);
        CHECK(pb[i].y == pa[i].y + 9);
        CHECK(a.at(pa[i].x, pa[i].y) == 1);
    }
    CHECK(std::is_sorted(pa.begin(), pa.end()));
}

TEST_CASE("too few foreground pixels is an error") {
    Mask m(4, 4);
    m.at(0, 0) = 1;
    CHECK_THROWS_AS(sample_query_points(m, 2, 0), ValidationError);
    CHECK_THROWS_AS(sample_query_points(m, 0, 0), ValidationError);
}

}
