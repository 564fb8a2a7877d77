// SPDX-License-Identifier: Apache-2.0
#include "keasplat/se3.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace keasplat {

namespace {

constexpr double kSmallAngle = 1e-8;

// Coefficients of exp([w]x) = I + a [w] + b [w]^2 and V = I + b [w] + c [w]^2.
struct ExpCoeffs {
    double a, b, c;
};

ExpCoeffs exp_coeffs(double theta) {
    const double t2 = theta * theta;
    if (theta < kSmallAngle)
        return {1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0};
    const double s = std::sin(theta);
    const double co = std::cos(theta);
    // (theta - sin) / theta^3 loses digits long before kSmallAngle.
    const double c = theta < 1e-3 ? 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
                                  : (theta - s) / (t2 * theta);
    return {s / theta, (1.0 - co) / t2, c};
}

} // namespace

Mat3 hat(const Vec3& w) {
    Mat3 m;
    m << 0.0, -w.z(), w.y(),
         w.z(), 0.0, -w.x(),
         -w.y(), w.x(), 0.0;
    return m;
}

Mat3 so3_exp(const Vec3& w) {
    const ExpCoeffs k = exp_coeffs(w.norm());
    const Mat3 W = hat(w);
    return Mat3::Identity() + k.a * W + k.b * W * W;
}

PoseSE3::PoseSE3()
    : tangent_(Vec6::Zero()), rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

PoseSE3 PoseSE3::from_tangent(const Vec6& tangent) {
    PoseSE3 p;
    p.tangent_ = tangent;
    const Vec3 w = tangent.head<3>();
    const ExpCoeffs k = exp_coeffs(w.norm());
    const Mat3 W = hat(w);
    const Mat3 W2 = W * W;
    p.rotation_ = Mat3::Identity() + k.a * W + k.b * W2;
    const Mat3 V = Mat3::Identity() + k.b * W + k.c * W2;
    p.translation_ = V * tangent.tail<3>();
    return p;
}

PoseSE3 PoseSE3::from_rt(const Mat3& rotation, const Vec3& translation) {
    PoseSE3 p;
    p.rotation_ = rotation;
    p.translation_ = translation;

    const Eigen::AngleAxisd aa(rotation);
    Vec3 w = aa.angle() * aa.axis();
    const double theta = w.norm();
    const Mat3 W = hat(w);
    // V^-1 = I - W/2 + (1/theta^2)(1 - a/(2b)) W^2
    double k;
    if (theta < 1e-4) {
        k = 1.0 / 12.0 + theta * theta / 720.0;
    } else {
        const ExpCoeffs c = exp_coeffs(theta);
        k = (1.0 - c.a / (2.0 * c.b)) / (theta * theta);
    }
    const Mat3 Vinv = Mat3::Identity() - 0.5 * W + k * W * W;
    p.tangent_.head<3>() = w;
    p.tangent_.tail<3>() = Vinv * translation;
    return p;
}

PoseSE3 PoseSE3::from_matrix(const Mat4& m) {
    return from_rt(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

Mat4 PoseSE3::matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
}

PoseSE3 PoseSE3::inverse() const {
    const Mat3 rt = rotation_.transpose();
    return from_rt(rt, -rt * translation_);
}

PoseSE3 se3_exp(const Vec6& tangent) { return PoseSE3::from_tangent(tangent); }

Vec6 se3_log(const PoseSE3& pose) { return pose.tangent(); }

PoseSE3 se3_compose(const PoseSE3& a, const PoseSE3& b) {
    return PoseSE3::from_rt(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation());
}

Vec3 se3_apply(const PoseSE3& p, const Vec3& x) { return p.apply(x); }

PoseSE3 se3_inverse(const PoseSE3& p) { return p.inverse(); }

double rotation_distance(const PoseSE3& a, const PoseSE3& b) {
    const Mat3 r = a.rotation().transpose() * b.rotation();
    const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
    // acos is ill-conditioned near 0; use the skew part there.
    if (c > 0.99) {
        const Vec3 v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
        return std::asin(std::min(1.0, 0.5 * v.norm()));
    }
    return std::acos(c);
}

PoseSE3 interpolate(const PoseSE3& a, const PoseSE3& b, double s) {
    const PoseSE3 delta = se3_compose(b, a.inverse());
    return se3_compose(se3_exp(s * delta.tangent()), a);
}

} // namespace keasplat
