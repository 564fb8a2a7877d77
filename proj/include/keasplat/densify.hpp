// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "keasplat/core.hpp"

namespace keasplat {

struct DensifyConfig {
    double grad_threshold = 2e-4;
    double prune_opacity_threshold = 0.005;
    std::size_t max_points = 200000;
    /// Gaussians whose largest scale is at most this fraction of the extent are cloned, larger ones split.
    double percent_dense = 0.01;
    double split_scale_divisor = 1.6;

    void validate() const;
};

struct DensifyStats {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
    /// Densification was skipped because it would exceed max_points.
    bool capped = false;
};

struct DensifyOutcome {
    DensifyStats stats;
    /// For every Gaussian after the call, its index before the call, or -1 when newly created.
    std::vector<std::ptrdiff_t> source;
};

/// Clone/split Gaussians whose mean view-space gradient exceeds the threshold,
/// then prune by opacity. A split replaces the parent in place by one child
/// (keeping its created_at) and appends the other; clones are appended. New
/// Gaussians carry created_at = step and the parent's m. Statistics are reset.
DensifyOutcome densify_and_prune(GaussianScene& scene, const DensifyConfig& cfg, std::int64_t step,
                                 double extent, std::mt19937_64& rng);

/// Radius of the smallest centroid-centered ball holding every mean.
double scene_extent(const GaussianScene& scene);

} // namespace keasplat
