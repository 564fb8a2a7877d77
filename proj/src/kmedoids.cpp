// SPDX-License-Identifier: Apache-2.0
#include "keasplat/kmedoids.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace keasplat {

namespace {

class Assignment {
public:
    Assignment(const std::vector<PixelCoord>& pts, const std::vector<int>& medoids) : pts_(pts), medoids_(medoids) {
        rebuild();
    }

    double dist(int a, int b) const {
        const double dx = pts_[a].x - pts_[b].x, dy = pts_[a].y - pts_[b].y;
        return std::sqrt(dx * dx + dy * dy);
    }

    // Nearest and second-nearest medoid (as medoid slots) for every point.
    void rebuild() {
        const std::size_t n = pts_.size();
        near_.assign(n, 0);
        d_near_.assign(n, std::numeric_limits<double>::infinity());
        d_second_.assign(n, std::numeric_limits<double>::infinity());
        for (std::size_t o = 0; o < n; ++o) {
            for (std::size_t m = 0; m < medoids_.size(); ++m) {
                const double d = dist(static_cast<int>(o), medoids_[m]);
                if (d < d_near_[o]) {
                    d_second_[o] = d_near_[o];
                    d_near_[o] = d;
                    near_[o] = static_cast<int>(m);
                } else if (d < d_second_[o]) {
                    d_second_[o] = d;
                }
            }
        }
    }

    // Best (slot, delta TD) for swapping point c into the medoid set.
    std::pair<int, double> best_swap(int c) const {
        const std::size_t k = medoids_.size();
        if (k == 1) {
            // No second medoid: the swap simply reassigns every point to c.
            double d = 0.0;
            for (std::size_t o = 0; o < pts_.size(); ++o) d += dist(static_cast<int>(o), c) - d_near_[o];
            return {0, d};
        }
        std::vector<double> delta(k, 0.0);
        for (std::size_t o = 0; o < pts_.size(); ++o)
            delta[near_[o]] += d_second_[o] - d_near_[o];
        double shared = 0.0;
        for (std::size_t o = 0; o < pts_.size(); ++o) {
            const double d = dist(static_cast<int>(o), c);
            if (d < d_near_[o]) {
                shared += d - d_near_[o];
                delta[near_[o]] += d_near_[o] - d_second_[o];
            } else if (d < d_second_[o]) {
                delta[near_[o]] += d - d_second_[o];
            }
        }
        const auto it = std::min_element(delta.begin(), delta.end());
        return {static_cast<int>(it - delta.begin()), *it + shared};
    }

    std::vector<int>& medoids() { return medoids_; }

private:
    const std::vector<PixelCoord>& pts_;
    std::vector<int> medoids_;
    std::vector<int> near_;
    std::vector<double> d_near_, d_second_;
};

} // namespace

std::vector<PixelCoord> sample_query_points(const Mask& mask, int k, std::uint64_t seed) {
    std::vector<PixelCoord> pts;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y)) pts.push_back({x, y});
    if (k < 1) throw ValidationError("sample_query_points: k must be positive");
    if (static_cast<std::size_t>(k) > pts.size())
        throw ValidationError("sample_query_points: mask has " + std::to_string(pts.size()) +
                              " foreground pixels, fewer than k = " + std::to_string(k));

    std::vector<int> order(pts.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> init(order.begin(), order.begin() + k);

    std::vector<char> is_medoid(pts.size(), 0);
    for (int m : init) is_medoid[m] = 1;
    Assignment a(pts, init);

    const int n = static_cast<int>(pts.size());
    for (int pass = 0; pass < kMaxSwapPasses; ++pass) {
        bool swapped = false;
        for (int c = 0; c < n; ++c) {
            if (is_medoid[c]) continue;
            const auto [slot, delta] = a.best_swap(c);
            if (delta < -1e-12) {
                is_medoid[a.medoids()[slot]] = 0;
                a.medoids()[slot] = c;
                is_medoid[c] = 1;
                a.rebuild();
                swapped = true;
            }
        }
        if (!swapped) break;
    }

    std::vector<PixelCoord> out;
    for (int m : a.medoids()) out.push_back(pts[m]);
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace keasplat
