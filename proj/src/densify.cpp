// SPDX-License-Identifier: Apache-2.0
#include "keasplat/densify.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

namespace keasplat {

void DensifyConfig::validate() const {
    if (!(grad_threshold >= 0.0) || !(prune_opacity_threshold >= 0.0))
        throw ValidationError("densify config: thresholds must be non-negative");
    if (max_points == 0) throw ValidationError("densify config: max_points must be positive");
    if (!(percent_dense > 0.0) || !(split_scale_divisor > 1.0))
        throw ValidationError("densify config: bad clone/split settings");
}

double scene_extent(const GaussianScene& scene) {
    if (scene.empty()) return 0.0;
    Vec3 c = Vec3::Zero();
    for (const auto& g : scene.gaussians) c += g.mu;
    c /= static_cast<double>(scene.size());
    double r = 0.0;
    for (const auto& g : scene.gaussians) r = std::max(r, (g.mu - c).norm());
    return r;
}

DensifyOutcome densify_and_prune(GaussianScene& scene, const DensifyConfig& cfg, std::int64_t step,
                                 double extent, std::mt19937_64& rng) {
    cfg.validate();
    scene.check_invariants();
    const std::size_t n = scene.size();
    DensifyOutcome out;

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < n; ++i)
        if (scene.denom[i] > 0 && scene.grad_accum[i] > cfg.grad_threshold) candidates.push_back(i);

    std::vector<Gaussian> next = scene.gaussians;
    std::vector<std::ptrdiff_t> source(n);
    for (std::size_t i = 0; i < n; ++i) source[i] = static_cast<std::ptrdiff_t>(i);

    if (n + candidates.size() > cfg.max_points) {
        out.stats.capped = !candidates.empty();
        if (out.stats.capped)
            spdlog::warn("densify: {} candidates would exceed max_points = {}; skipped", candidates.size(),
                         cfg.max_points);
    } else {
        std::normal_distribution<double> normal(0.0, 1.0);
        const double clone_limit = cfg.percent_dense * extent;
        for (std::size_t i : candidates) {
            const Gaussian& parent = scene.gaussians[i];
            const Vec3 s = parent.scale();
            if (s.maxCoeff() <= clone_limit) {
                Gaussian c = parent;
                c.created_at = step;
                next.push_back(std::move(c));
                source.push_back(-1);
                ++out.stats.cloned;
                continue;
            }
            const Mat3 r = quat_to_rotation(parent.rot);
            const Vec3 child_log_scale = (s / cfg.split_scale_divisor).array().log();
            Gaussian a = parent, b = parent;
            for (Gaussian* child : {&a, &b}) {
                const Vec3 z(normal(rng), normal(rng), normal(rng));
                child->mu = parent.mu + r * s.cwiseProduct(z);
                child->log_scale = child_log_scale;
            }
            b.created_at = step;
            next[i] = std::move(a);
            next.push_back(std::move(b));
            source.push_back(-1);
            ++out.stats.split;
        }
    }

    std::vector<Gaussian> kept;
    kept.reserve(next.size());
    for (std::size_t i = 0; i < next.size(); ++i) {
        if (next[i].opacity() < cfg.prune_opacity_threshold) {
            ++out.stats.pruned;
            continue;
        }
        out.source.push_back(source[i]);
        kept.push_back(std::move(next[i]));
    }
    scene.gaussians = std::move(kept);
    scene.reset_stats();
    return out;
}

} // namespace keasplat
