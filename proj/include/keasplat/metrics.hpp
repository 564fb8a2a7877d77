// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "keasplat/image.hpp"

namespace keasplat {

/// Value returned for identical images.
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) for images in [0, 1], capped at kPsnrCap.
double psnr(const Image& a, const Image& b);

/// Mean PSNR over corresponding views of an edited and a reference scene.
/// Only the PSNR part of edit fidelity is measured.
double e_psnr(const std::vector<Image>& renders_edited, const std::vector<Image>& renders_reference);

} // namespace keasplat
