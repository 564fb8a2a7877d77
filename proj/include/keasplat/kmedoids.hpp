// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "keasplat/image.hpp"

namespace keasplat {

struct PixelCoord {
    int x = 0;
    int y = 0;

    bool operator==(const PixelCoord&) const = default;
    /// Row-major order.
    bool operator<(const PixelCoord& o) const { return y < o.y || (y == o.y && x < o.x); }
};

inline constexpr int kMaxSwapPasses = 100;

/// k medoids of the foreground pixel coordinates (Euclidean), returned in row-major order.
/// Seeded random initialization followed by eager best-removal swaps.
std::vector<PixelCoord> sample_query_points(const Mask& mask, int k, std::uint64_t seed);

} // namespace keasplat
