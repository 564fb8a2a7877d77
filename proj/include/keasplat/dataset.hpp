// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "keasplat/core.hpp"

namespace keasplat {

/// A frame directory described by manifest.json:
///
///   {"name": ..., "source": ...,
///    "intrinsics": {"fx", "fy", "cx", "cy", "width", "height"},
///    "frames": [{"index": 0, "pose": [[4x4 camera-to-world]], "image": ..., "mask": ..., "depth": ...}]}
///
/// Per-frame paths default to images/NNNNN.png, masks/NNNNN.png and depth/NNNNN.pfm.
/// Masks and depth are optional; poses are optional ground truth.
struct Dataset {
    std::filesystem::path root;
    std::string name;
    std::string source;
    CameraIntrinsics intrinsics;
    std::vector<Frame> frames;
    std::vector<std::optional<PoseSE3>> poses;  // camera-to-world
};

Dataset load_dataset(const std::filesystem::path& dir);

/// Writes images, masks (when any pixel is set), depth (when present) and the manifest.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

std::string frame_file_stem(int index);

} // namespace keasplat
