// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include <Eigen/Core>

#include "keasplat/se3.hpp"

namespace keasplat {

struct ShBasis {
    int count = 1;
    std::array<double, 16> value{};
    std::array<Vec3, 16> grad{};  // d value / d dir
};

/// Real SH basis up to `degree` at unit direction `dir` (3DGS sign convention).
ShBasis sh_basis(int degree, const Vec3& dir);

/// Unclamped color: sum_k Y_k(dir) sh[k*3+c] + 0.5.
Vec3 sh_color(const ShBasis& basis, const Eigen::VectorXd& sh);

/// Accumulates dL/dsh and returns dL/ddir for an upstream color gradient.
Vec3 sh_color_backward(const ShBasis& basis, const Eigen::VectorXd& sh, const Vec3& d_color,
                       Eigen::Ref<Eigen::VectorXd> d_sh);

} // namespace keasplat
