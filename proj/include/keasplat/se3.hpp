// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace keasplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Rigid transform x -> R x + t with a 6-dim tangent (omega, t) parameterization.
///
/// The tangent is the SE(3) logarithm: the first three entries are the
/// axis-angle rotation, the last three the translational part before the
/// V-matrix is applied. Rotation and translation are cached so that apply()
/// and compose() never re-evaluate the exponential.
class PoseSE3 {
public:
    PoseSE3();

    static PoseSE3 identity() { return PoseSE3(); }
    static PoseSE3 from_tangent(const Vec6& tangent);
    /// R must be a rotation; the tangent is recovered with the logarithm.
    static PoseSE3 from_rt(const Mat3& rotation, const Vec3& translation);
    static PoseSE3 from_matrix(const Mat4& m);

    const Vec6& tangent() const { return tangent_; }
    const Mat3& rotation() const { return rotation_; }
    const Vec3& translation() const { return translation_; }
    Mat4 matrix() const;

    Vec3 apply(const Vec3& x) const { return rotation_ * x + translation_; }
    PoseSE3 inverse() const;

private:
    Vec6 tangent_;
    Mat3 rotation_;
    Vec3 translation_;
};

Mat3 hat(const Vec3& w);

PoseSE3 se3_exp(const Vec6& tangent);
Vec6 se3_log(const PoseSE3& pose);
/// (a ∘ b)(x) = a(b(x)).
PoseSE3 se3_compose(const PoseSE3& a, const PoseSE3& b);
Vec3 se3_apply(const PoseSE3& p, const Vec3& x);
PoseSE3 se3_inverse(const PoseSE3& p);

/// Rotation exponential exp([w]x).
Mat3 so3_exp(const Vec3& w);

/// Angle of the relative rotation between two poses, radians.
double rotation_distance(const PoseSE3& a, const PoseSE3& b);

/// Geodesic interpolation exp(s * log(b ∘ a^-1)) ∘ a.
PoseSE3 interpolate(const PoseSE3& a, const PoseSE3& b, double s);

} // namespace keasplat
