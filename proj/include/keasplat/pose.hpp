// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "keasplat/core.hpp"

namespace keasplat {

/// Settings of the frozen-scene relative pose search.
struct PoseEstimateConfig {
    int max_iters = 300;
    double lr_rot = 1e-3;
    double lr_trans = 1e-3;
    /// Stop once the best loss improved by less than this fraction over `convergence_window` iterations.
    double convergence_tol = 1e-6;
    int convergence_window = 10;
    /// Learning rates decay exponentially to this fraction by max_iters.
    double lr_final_scale = 0.1;
    /// D-SSIM share of the photometric loss.
    double gamma = 0.2;
    /// Ignore KEA pixels of the target frame.
    bool mask_kea = false;
    /// Finite-difference step of the curvature probe, radians / scene units.
    double probe_step = 1e-2;
    /// Smallest probed curvature below which the estimate is flagged.
    double min_curvature = 1e-2;
    /// Starting relative pose; identity when unset.
    std::optional<PoseSE3> init;
    Vec3 background = Vec3::Zero();

    void validate() const;
};

struct PoseEstimate {
    /// M with world_to_cam(next) = M ∘ world_to_cam(reference).
    PoseSE3 relative;
    double final_loss = 0.0;
    int iterations = 0;
    /// Second differences of the loss along the six tangent axes at the result.
    Vec6 curvature = Vec6::Zero();
    /// Set when the loss is nearly flat along some tangent axis.
    bool low_confidence = false;
};

/// Relative motion M minimizing L_rgb(render(M ⊙ scene), next_frame) with the scene frozen.
PoseEstimate estimate_relative_pose(const GaussianScene& scene, const Frame& next_frame,
                                    const CameraIntrinsics& k, const PoseEstimateConfig& cfg);

/// Same search for a camera currently at `reference` (world_to_cam).
PoseEstimate estimate_relative_pose(const GaussianScene& scene, const PoseSE3& reference,
                                    const Frame& next_frame, const CameraIntrinsics& k,
                                    const PoseEstimateConfig& cfg);

/// Photometric objective used by the pose search, optionally with pixels under the mask ignored.
/// `grad` receives d loss / d render when non-null.
double masked_loss_rgb(const Image& render, const Frame& target, double gamma, bool mask_kea,
                       Image* grad = nullptr);

} // namespace keasplat
