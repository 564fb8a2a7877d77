// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "keasplat/image.hpp"
#include "keasplat/se3.hpp"

namespace keasplat {

/// Number of SH coefficients per color channel for degree D.
constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// One splat: h = {mu, Sigma(rot, scale), color (SH), opacity, m}.
///
/// SH coefficients are stored coefficient-major: sh[k * 3 + channel].
struct Gaussian {
    Vec3 mu = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rot = Vec4(1.0, 0.0, 0.0, 0.0);  // (w, x, y, z)
    double opacity_logit = 0.0;
    Eigen::VectorXd sh = Eigen::VectorXd::Zero(3);
    Vec2 m = Vec2::Zero();                  // KEA identity logits
    std::int64_t created_at = 0;

    int sh_degree() const;
    double opacity() const;
    Vec3 scale() const { return log_scale.array().exp(); }
    /// Color an SH-degree-0 evaluation gives (view independent part).
    Vec3 dc_color() const;
    bool finite() const;
};

/// Ordered Gaussian collection plus densification statistics.
struct GaussianScene {
    std::vector<Gaussian> gaussians;
    std::vector<double> grad_accum;      // running mean of view-space gradient norm
    std::vector<std::int64_t> denom;     // number of accumulation events

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }

    void push_back(Gaussian g);
    void reset_stats();
    /// Throws ValidationError if the bookkeeping arrays drifted from `gaussians`.
    void check_invariants() const;
};

struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.5;
    double cy = 0.5;
    int width = 1;
    int height = 1;

    void validate() const;
};

struct Frame {
    Image image;                 // H x W x 3 in [0, 1]
    Mask mask;                   // H x W, 1 = KEA
    std::optional<Image> depth;  // H x W x 1, strictly positive
    int index = 0;

    void validate() const;
};

double sigmoid(double x);
double logit(double p);

/// SH band-0 constant.
inline constexpr double kShC0 = 0.28209479177387814;

Vec4 normalize_quat(const Vec4& q);
Mat3 quat_to_rotation(const Vec4& q);
Vec4 rotation_to_quat(const Mat3& r);
/// Hamilton product a * b, (w, x, y, z) layout.
Vec4 quat_multiply(const Vec4& a, const Vec4& b);

/// Sigma = R diag(s^2) R^T with R from the normalized quaternion.
Mat3 covariance_from(const Vec4& rot, const Vec3& log_scale);

/// mu -> R mu + t, rot -> quat(R) * rot. SH coefficients are left as is.
Gaussian transform_gaussian(const Gaussian& g, const PoseSE3& pose);

} // namespace keasplat
