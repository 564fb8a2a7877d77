// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "keasplat/image.hpp"

namespace keasplat {

/// 8-bit PNG as a 3-channel image in [0, 1]. Gray input is replicated, alpha dropped.
Image read_png_rgb(const std::filesystem::path& path);

/// 8-bit PNG as a binary mask: gray value > 127 maps to 1.
Mask read_png_mask(const std::filesystem::path& path);

/// Writes a 1- or 3-channel image as 8-bit PNG; values are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Image& img);
void write_png(const std::filesystem::path& path, const Mask& mask);

/// Rounds every value to the nearest of the 256 levels a PNG stores.
Image quantize8(const Image& img);

/// Single-channel Portable Float Map ("Pf"); rows are stored bottom to top.
/// Either byte order is read; values must be finite.
Image read_pfm(const std::filesystem::path& path);

/// Writes a 1-channel image as little-endian "Pf" float32.
void write_pfm(const std::filesystem::path& path, const Image& img);

} // namespace keasplat
