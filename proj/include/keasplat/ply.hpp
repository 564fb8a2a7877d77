// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "keasplat/core.hpp"

namespace keasplat {

/// Binary little-endian PLY in the usual 3DGS layout (x y z nx ny nz f_dc_* f_rest_*
/// opacity scale_* rot_*) followed by kea_0 kea_1 and an int created_at.
/// Values are stored as float32. The trajectory goes to a JSON sidecar next to
/// the PLY (see trajectory_path) holding camera-to-world 4x4 row-major matrices.
void save_scene(const std::filesystem::path& path, const GaussianScene& scene,
                const std::vector<PoseSE3>& trajectory, const std::optional<CameraIntrinsics>& intrinsics = {});

struct LoadedScene {
    GaussianScene scene;
    std::vector<PoseSE3> trajectory;
    std::optional<CameraIntrinsics> intrinsics;
    /// The file had no kea_* properties; every m was set to (0, 0).
    bool kea_defaulted = false;
};

/// Reads a scene written by save_scene or a stock 3DGS export. A missing sidecar
/// yields an empty trajectory.
LoadedScene load_scene(const std::filesystem::path& path);

/// SCENE.ply -> SCENE.trajectory.json
std::filesystem::path trajectory_path(const std::filesystem::path& ply_path);

void save_trajectory(const std::filesystem::path& path, const std::vector<PoseSE3>& trajectory,
                     const std::optional<CameraIntrinsics>& intrinsics = {});
/// Returns the poses and, when present, the intrinsics.
std::pair<std::vector<PoseSE3>, std::optional<CameraIntrinsics>> load_trajectory(const std::filesystem::path& path);

/// Row-major 4x4 camera-to-world matrix from a JSON file (either a bare matrix or {"pose": matrix}).
PoseSE3 load_pose_matrix(const std::filesystem::path& path);

} // namespace keasplat
