// SPDX-License-Identifier: Apache-2.0
// Synthetic scenes and datasets shared by the unit and acceptance tests.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "keasplat/core.hpp"
#include "keasplat/dataset.hpp"

namespace keasplat::synth {

/// Random Gaussian with mean inside the box [lo, hi].
Gaussian random_gaussian(std::mt19937_64& rng, int sh_degree, const Vec3& lo, const Vec3& hi,
                         double min_log_scale, double max_log_scale);

/// n random Gaussians filling the view of an identity camera between depths z0 and z1.
GaussianScene random_view_scene(std::mt19937_64& rng, int n, int sh_degree, const CameraIntrinsics& k, double z0,
                                double z1, double min_log_scale, double max_log_scale);

CameraIntrinsics small_intrinsics(int width, int height, double focal);

/// Slanted backdrop card plus a sphere in front of it, seen by cameras orbiting a pivot.
/// The card covers exactly the frame-0 view (plus a margin); beyond it lies the background.
struct OrbitSpec {
    int width = 80;
    int height = 60;
    double focal = 70.0;
    int frames = 20;
    double step_deg = 1.0;
    double pivot_depth = 4.0;
    /// Backdrop plane z = card_depth + card_slope.x * x + card_slope.y * y.
    double card_depth = 6.0;
    Vec2 card_slope = Vec2(0.25, 0.1);
    /// Backdrop Gaussian spacing in frame-0 pixels.
    double card_spacing_px = 0.8;
    /// Card half-extent beyond the frame-0 frustum, in frame-0 pixels.
    double card_margin_px = 1.0;
    Vec3 sphere_center = Vec3(0.3, 0.1, 3.5);
    double sphere_radius = 0.6;
    /// Std-dev of the per-frame color noise injected inside the sphere mask.
    double kea_noise = 0.0;
    std::uint64_t noise_seed = 1;
};

struct OrbitScene {
    OrbitSpec spec;
    CameraIntrinsics k;
    GaussianScene gt;
    /// Which GT Gaussians belong to the sphere.
    std::vector<std::uint8_t> on_sphere;
};

OrbitScene make_orbit_scene(const OrbitSpec& spec);

/// Camera-to-world pose at orbit angle `deg` (frame 0 sits at angle 0 with the identity pose).
PoseSE3 orbit_pose(const OrbitSpec& spec, double deg);

/// Frame rendered from the GT scene with analytic depth and sphere mask.
Frame render_orbit_frame(const OrbitScene& scene, const PoseSE3& cam_to_world, int index, bool with_depth,
                         double noise = 0.0, std::uint64_t noise_seed = 0);

/// Training frames 0..frames-1; only frame 0 carries depth. Poses are ground truth.
Dataset make_orbit_dataset(const OrbitScene& scene);

/// Views halfway between consecutive training frames, at the given pair indices.
Dataset make_heldout_dataset(const OrbitScene& scene, const std::vector<int>& pairs);

/// Ray-surface depth along the camera z axis (card or sphere), and whether the sphere is hit first.
double analytic_depth(const OrbitScene& scene, const PoseSE3& cam_to_world, double u, double v, bool* on_sphere);

} // namespace keasplat::synth
