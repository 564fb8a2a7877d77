// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "keasplat/core.hpp"

namespace keasplat {

/// Stock 3DGS rasterization constants.
struct RasterConstants {
    static constexpr int kTileSize = 16;
    static constexpr double kLowPass = 0.3;           // px^2 added to the 2D covariance
    static constexpr double kNearPlane = 0.01;
    static constexpr double kSigmaExtent = 3.0;       // culling radius and per-pixel cutoff
    static constexpr double kMinTransmittance = 1e-4; // early termination
};

struct ProjectedGaussian {
    Vec2 mean2d;
    Mat2 cov2d;
    double depth = 0.0;
};

/// Pinhole projection of one Gaussian; nullopt when culled (behind the near
/// plane or the 3-sigma box misses the image).
std::optional<ProjectedGaussian> project_gaussian(const Gaussian& g, const PoseSE3& world_to_cam,
                                                  const CameraIntrinsics& k);

/// Rendered channels. identity holds the alpha-weighted sum of m (pre-softmax),
/// depth the alpha-normalized expected camera depth (0 where alpha is 0).
struct RenderOutput {
    Image color;     // 3 channels
    Image identity;  // 2 channels
    Image alpha;     // 1 channel
    Image depth;     // 1 channel
    std::vector<int> contributor_count;
};

/// Cotangents with RenderOutput's layout. Empty images count as zero.
struct RenderCotangents {
    Image color;
    Image identity;
    Image alpha;
    Image depth;
};

struct RenderGrads {
    std::vector<Vec3> mu;
    std::vector<Vec3> log_scale;
    std::vector<Vec4> rot;
    std::vector<double> opacity_logit;
    std::vector<Eigen::VectorXd> sh;
    std::vector<Vec2> m;
    /// d/d delta for world_to_cam' = exp(delta) ∘ world_to_cam, delta = (omega, v).
    Vec6 pose = Vec6::Zero();
    /// Screen-space (pixel) gradient of the projected mean; zero when culled.
    std::vector<Vec2> mean2d;
    std::vector<std::uint8_t> visible;

    void resize(const GaussianScene& scene);
};

struct BackwardOptions {
    /// When false the identity cotangent only reaches m, so KEA supervision
    /// never moves geometry, color or the camera.
    bool identity_drives_geometry = true;
};

RenderOutput render(const GaussianScene& scene, const PoseSE3& world_to_cam, const CameraIntrinsics& k,
                    const Vec3& background);

RenderGrads render_backward(const GaussianScene& scene, const PoseSE3& world_to_cam,
                            const CameraIntrinsics& k, const Vec3& background,
                            const RenderCotangents& d_output, const BackwardOptions& options = {});

/// Folds the screen-space gradient magnitudes of `grads` into scene.grad_accum/denom.
/// Gradients are converted to NDC units (x W/2, x H/2) so thresholds follow 3DGS.
void accumulate_view_space_gradients(GaussianScene& scene, const std::vector<Vec2>& mean2d_grad,
                                     const std::vector<std::uint8_t>& visible, const CameraIntrinsics& k);

} // namespace keasplat
