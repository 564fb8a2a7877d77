// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "keasplat/core.hpp"
#include "keasplat/image.hpp"

namespace keasplat {

/// Weights of the photometric blend, the KEA terms and the total objective.
struct LossWeights {
    double gamma = 0.2;        // D-SSIM share inside L_rgb
    double lambda_bce = 1.0;   // inside L_KEA
    double lambda_jsd = 0.1;   // inside L_KEA
    double lambda_rgb = 1.0;
    double lambda_kea = 0.5;
    double lambda_ipc = 0.1;
    double lambda_pc = 0.05;

    void validate() const;
};

/// Mean absolute error over all pixels and channels.
double loss_l1(const Image& render, const Image& target, Image* grad = nullptr);

/// (1 - gamma) L1 + gamma D-SSIM.
double loss_rgb(const Image& render, const Image& target, double gamma, Image* grad = nullptr);

/// Probability clamp used by the BCE term.
inline constexpr double kBceClamp = 1e-7;

/// softmax(m)[1], the KEA probability of a logit pair.
double kea_probability(const Vec2& m);

/// Argmax of softmax(m); a tie resolves to 0 (outside the KEA).
int kea_identity(const Vec2& m);

/// Per-pixel BCE between softmax(identity) and the mask, averaged over pixels.
double loss_bce(const Image& identity, const Mask& mask, Image* grad = nullptr);

/// Mean Jensen-Shannon divergence between softmax(m) of Y sampled Gaussians and
/// their Z nearest neighbors in mu-space; lies in [0, ln 2].
/// `grad_m`, when non-null, is resized to the scene and receives dL/dm.
double loss_jsd(const GaussianScene& scene, int sample_count, int neighbor_count, std::uint64_t seed,
                std::vector<Vec2>* grad_m = nullptr);

/// Concatenated (mu, log_scale, rot, opacity_logit, sh) of one Gaussian.
Eigen::VectorXd anchor_parameters(const Gaussian& g);

/// Snapshot of the KEA Gaussians used by the anchor loss.
struct AnchorState {
    std::vector<Eigen::VectorXd> params;
    std::vector<double> age_weight;
    std::vector<std::size_t> anchored_ids;

    std::size_t size() const { return anchored_ids.size(); }
    void validate() const;
};

/// min(1, (step - created_at) / maturity); older Gaussians weigh more.
double anchor_age_weight(std::int64_t created_at, std::int64_t step, double maturity);

/// Snapshot every Gaussian with kea_identity = 1.
AnchorState capture_anchors(const GaussianScene& scene, std::int64_t step, double maturity);

/// Recompute age weights for the current step.
void refresh_anchor_weights(AnchorState& anchors, const GaussianScene& scene, std::int64_t step, double maturity);

/// Gradient of the anchor loss, one entry per anchored id, laid out like anchor_parameters().
struct AnchorGrad {
    std::vector<std::size_t> ids;
    std::vector<Eigen::VectorXd> d_params;
};

/// sum_i w_i |theta_i - theta'_i|^2 / sum_i w_i; 0 when every weight is 0.
double loss_ipc(const GaussianScene& scene, const AnchorState& anchors, AnchorGrad* grad = nullptr);

/// Chamfer feature: (mu, exp(log_scale), sign-canonical unit rot, sigmoid(opacity), SH-DC, softmax(m)).
Eigen::Matrix<double, 16, 1> chamfer_features(const Gaussian& g);

/// Symmetric Chamfer distance: mean over A of the squared feature distance to
/// A's nearest neighbor (in mu) in B, plus the same from B to A.
double chamfer(const std::vector<Gaussian>& a, const std::vector<Gaussian>& b);

/// chamfer(a, b) together with d/d delta of chamfer(a, exp(delta) ⊙ b) at delta = 0.
double chamfer_with_pose_grad(const std::vector<Gaussian>& a, const std::vector<Gaussian>& b, Vec6& grad);

struct LossComponents {
    double rgb = 0.0;
    double bce = 0.0;
    double jsd = 0.0;
    double ipc = 0.0;
    double pc = 0.0;
};

/// lambda_rgb L_rgb + lambda_kea (lambda_bce L_bce + lambda_jsd L_jsd) + lambda_ipc L_ipc + lambda_pc L_pc.
double total_loss(const LossComponents& c, const LossWeights& w);

} // namespace keasplat
