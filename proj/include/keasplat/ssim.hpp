// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "keasplat/image.hpp"

namespace keasplat {

/// SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2,
/// averaged over pixels and channels. Windows truncated by the border are
/// renormalized, so constant images give constant-patch statistics everywhere.
struct SsimConstants {
    static constexpr int kWindow = 11;
    static constexpr double kSigma = 1.5;
    static constexpr double kC1 = 0.01 * 0.01;
    static constexpr double kC2 = 0.03 * 0.03;
};

/// SSIM of a against b; when `grad_a` is non-null it receives d ssim / d a.
double ssim(const Image& a, const Image& b, Image* grad_a = nullptr);

/// (1 - ssim) / 2; gradient with respect to a when requested.
double d_ssim(const Image& a, const Image& b, Image* grad_a = nullptr);

} // namespace keasplat
