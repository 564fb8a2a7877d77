// SPDX-License-Identifier: Apache-2.0
#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace keasplat::synth {

namespace {

struct Projected {
    double z;
    double power;
    Vec3 color;
    Vec2 m;
    double opacity;
};

bool project_one(const Gaussian& g, const PoseSE3& w2c, const CameraIntrinsics& k, double px, double py,
                 Projected& out) {
    const Vec3 p = w2c.rotation() * g.mu + w2c.translation();
    if (p.z() <= 0.01) return false;
    const Eigen::Quaterniond q = Eigen::Quaterniond(g.rot[0], g.rot[1], g.rot[2], g.rot[3]).normalized();
    const Mat3 r = w2c.rotation() * q.toRotationMatrix();
    const Vec3 s = g.log_scale.array().exp();
    const Mat3 cov = r * (s.array() * s.array()).matrix().asDiagonal() * r.transpose();
    Eigen::Matrix<double, 2, 3> j;
    j << k.fx / p.z(), 0.0, -k.fx * p.x() / (p.z() * p.z()), 0.0, k.fy / p.z(), -k.fy * p.y() / (p.z() * p.z());
    const Mat2 cov2 = j * cov * j.transpose() + 0.3 * Mat2::Identity();
    const Vec2 d(px - (k.fx * p.x() / p.z() + k.cx), py - (k.fy * p.y() / p.z() + k.cy));
    out.z = p.z();
    out.power = -0.5 * d.dot(cov2.inverse() * d);
    for (int c = 0; c < 3; ++c) out.color[c] = std::max(0.0, 0.5 + kShC0 * g.sh[c]);
    out.m = g.m;
    out.opacity = 1.0 / (1.0 + std::exp(-g.opacity_logit));
    return true;
}

} // namespace

PixelOracle brute_force_pixel(const GaussianScene& scene, const PoseSE3& world_to_cam, const CameraIntrinsics& k,
                              const Vec3& background, double px, double py) {
    std::vector<Projected> list;
    for (const Gaussian& g : scene.gaussians) {
        Projected p;
        if (project_one(g, world_to_cam, k, px, py, p)) list.push_back(p);
    }
    std::stable_sort(list.begin(), list.end(), [](const Projected& a, const Projected& b) { return a.z < b.z; });

    PixelOracle o;
    double transmittance = 1.0, depth_sum = 0.0;
    for (const Projected& p : list) {
        const double a = p.opacity * std::exp(p.power);
        o.color += transmittance * a * p.color;
        o.identity += transmittance * a * p.m;
        depth_sum += transmittance * a * p.z;
        transmittance *= 1.0 - a;
        o.min_power = std::min(o.min_power, p.power);
    }
    o.alpha = 1.0 - transmittance;
    o.color += transmittance * background;
    o.depth = o.alpha > 0.0 ? depth_sum / o.alpha : 0.0;
    return o;
}

CameraIntrinsics single_pixel_camera() {
    CameraIntrinsics k;
    k.width = k.height = 1;
    k.fx = k.fy = 1.0;
    k.cx = k.cy = 0.5;
    return k;
}

GaussianScene random_pixel_configuration(std::mt19937_64& rng, int max_splats, const CameraIntrinsics& k) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_int_distribution<int> count(1, max_splats);
    for (;;) {
        GaussianScene scene;
        const int c = count(rng);
        for (int i = 0; i < c; ++i) {
            Gaussian g;
            const double z = 1.0 + 4.0 * u(rng);
            g.mu = Vec3(z * (u(rng) - 0.5) / k.fx, z * (u(rng) - 0.5) / k.fy, z);
            for (int a = 0; a < 3; ++a) g.log_scale[a] = std::log(z * (0.2 + 1.3 * u(rng)) / k.fx);
            g.rot = Vec4(n(rng), n(rng), n(rng), n(rng)).normalized();
            const double p = 0.05 + 0.8 * u(rng);
            g.opacity_logit = std::log(p / (1.0 - p));
            g.sh = Eigen::VectorXd(3);
            for (int ch = 0; ch < 3; ++ch) g.sh[ch] = 3.0 * (u(rng) - 0.5);
            g.m = Vec2(n(rng), n(rng));
            scene.push_back(std::move(g));
        }
        const PixelOracle o = brute_force_pixel(scene, PoseSE3::identity(), k, Vec3::Zero(), 0.0, 0.0);
        if (o.min_power > -4.0) return scene;
    }
}

} // namespace keasplat::synth
