// SPDX-License-Identifier: Apache-2.0
#include "keasplat/core.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <string>

namespace keasplat {

int Gaussian::sh_degree() const {
    const auto per_channel = sh.size() / 3;
    for (int d = 0; d <= 3; ++d)
        if (sh_coeff_count(d) == per_channel) return d;
    throw ValidationError("Gaussian: SH coefficient count " + std::to_string(sh.size()) +
                          " does not match any degree 0..3");
}

double Gaussian::opacity() const { return sigmoid(opacity_logit); }

Vec3 Gaussian::dc_color() const {
    return Vec3(kShC0 * sh[0] + 0.5, kShC0 * sh[1] + 0.5, kShC0 * sh[2] + 0.5);
}

bool Gaussian::finite() const {
    return mu.allFinite() && log_scale.allFinite() && rot.allFinite() &&
           std::isfinite(opacity_logit) && sh.allFinite() && m.allFinite() && rot.norm() > 0.0;
}

void GaussianScene::push_back(Gaussian g) {
    gaussians.push_back(std::move(g));
    grad_accum.push_back(0.0);
    denom.push_back(0);
}

void GaussianScene::reset_stats() {
    grad_accum.assign(gaussians.size(), 0.0);
    denom.assign(gaussians.size(), 0);
}

void GaussianScene::check_invariants() const {
    if (grad_accum.size() != gaussians.size() || denom.size() != gaussians.size())
        throw ValidationError("GaussianScene: statistics length differs from Gaussian count");
    for (auto d : denom)
        if (d < 0) throw ValidationError("GaussianScene: negative accumulation count");
}

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ValidationError("intrinsics: image size must be positive");
    if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height))
        throw ValidationError("intrinsics: principal point outside the image");
}

void Frame::validate() const {
    if (image.channels != 3) throw ValidationError("frame: image must have 3 channels");
    for (double v : image.data)
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("frame: image values must lie in [0, 1]");
    if (mask.width != image.width || mask.height != image.height)
        throw ValidationError("frame: mask size differs from image size");
    for (auto v : mask.data)
        if (v > 1) throw ValidationError("frame: mask values must be 0 or 1");
    if (depth) {
        if (depth->width != image.width || depth->height != image.height || depth->channels != 1)
            throw ValidationError("frame: depth size differs from image size");
        for (double v : depth->data)
            if (!(v > 0.0) || !std::isfinite(v))
                throw ValidationError("frame: depth must be finite and strictly positive");
    }
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

Vec4 normalize_quat(const Vec4& q) { return q / q.norm(); }

Mat3 quat_to_rotation(const Vec4& q_raw) {
    const Vec4 q = normalize_quat(q_raw);
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Vec4 rotation_to_quat(const Mat3& r) {
    const Eigen::Quaterniond q(r);
    return Vec4(q.w(), q.x(), q.y(), q.z());
}

Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
    return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
                a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
                a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
                a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

Mat3 covariance_from(const Vec4& rot, const Vec3& log_scale) {
    const Mat3 r = quat_to_rotation(rot);
    const Vec3 s2 = (2.0 * log_scale).array().exp();
    const Mat3 cov = r * s2.asDiagonal() * r.transpose();
    return 0.5 * (cov + cov.transpose());
}

Gaussian transform_gaussian(const Gaussian& g, const PoseSE3& pose) {
    Gaussian out = g;
    out.mu = pose.apply(g.mu);
    out.rot = quat_multiply(rotation_to_quat(pose.rotation()), normalize_quat(g.rot));
    return out;
}

} // namespace keasplat
