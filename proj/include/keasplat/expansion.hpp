// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "keasplat/core.hpp"
#include "keasplat/densify.hpp"
#include "keasplat/losses.hpp"
#include "keasplat/pose.hpp"

namespace keasplat {

/// Per-group Adam learning rates. The position rate is multiplied by the scene extent.
struct LearningRates {
    double position = 1.6e-4;
    double sh_dc = 2.5e-3;
    double sh_rest = 2.5e-3 / 20.0;
    double opacity = 0.05;
    double scale = 5e-3;
    double rotation = 1e-3;
    double kea = 1e-2;
    double pose_refine = 1e-4;

    void validate() const;
};

struct ExpansionConfig {
    int iters_per_frame = 120;
    int init_iters = 500;
    double densify_grad_threshold = 2e-4;
    /// Steps between densifications; 0 means iters_per_frame.
    int densify_interval = 0;
    double prune_opacity_threshold = 0.005;
    std::size_t max_points = 200000;
    int init_stride = 1;
    int sh_degree = 3;
    int jsd_samples = 1024;
    int jsd_neighbors = 5;
    double anchor_maturity = 500.0;
    /// Optimize over the two newest frames instead of every frame seen so far.
    bool two_frame_window = false;
    std::uint64_t seed = 0;
    Vec3 background = Vec3::Zero();
    LossWeights loss_weights;
    PoseEstimateConfig pose_cfg;
    LearningRates lr;

    int effective_densify_interval() const { return densify_interval > 0 ? densify_interval : iters_per_frame; }
    DensifyConfig densify_config() const;
    void validate() const;
};

/// One optimization step's loss components.
struct StepRecord {
    std::int64_t step = 0;
    int frame = 0;
    LossComponents components;
    double total = 0.0;
};

struct ReconstructionResult {
    GaussianScene scene;
    /// Camera-to-world pose per frame; frame 0 is the identity.
    std::vector<PoseSE3> trajectory;
    /// M_i with world_to_cam(i + 1) = M_i ∘ world_to_cam(i), as finally refined.
    std::vector<PoseSE3> relative_poses;
    std::vector<PoseEstimate> pose_estimates;
    AnchorState anchors;
    std::vector<StepRecord> loss_history;
    std::vector<DensifyStats> densify_history;
};

/// Pose estimation failed on `frame`; carries everything reconstructed before it.
class ReconstructionFailure : public NumericalError {
public:
    ReconstructionFailure(const std::string& what, int frame, ReconstructionResult partial)
        : NumericalError(what, frame), partial_(std::make_shared<ReconstructionResult>(std::move(partial))) {}

    int frame() const noexcept { return static_cast<int>(index()); }
    const ReconstructionResult& partial() const noexcept { return *partial_; }

private:
    std::shared_ptr<ReconstructionResult> partial_;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// One Gaussian per strided pixel of frame 0, unprojected with its depth.
GaussianScene init_scene_from_frame(const Frame& frame, const CameraIntrinsics& k, int stride, int sh_degree = 3);

/// Joint descent where L_rgb moves geometry, color and opacity while L_KEA moves m only.
GaussianScene optimize_single_view(GaussianScene scene, const Frame& frame, const CameraIntrinsics& k, int iters,
                                   const LossWeights& w, const ExpansionConfig& cfg = {});

/// The full incremental reconstruction over an ordered frame sequence.
ReconstructionResult expand_scene(const std::vector<Frame>& frames, const CameraIntrinsics& k,
                                  const ExpansionConfig& cfg, const StepCallback& on_step = {});

} // namespace keasplat
