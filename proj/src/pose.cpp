// SPDX-License-Identifier: Apache-2.0
#include "keasplat/pose.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "keasplat/adam.hpp"
#include "keasplat/losses.hpp"
#include "keasplat/rasterizer.hpp"

namespace keasplat {

void PoseEstimateConfig::validate() const {
    if (max_iters <= 0) throw ValidationError("pose config: max_iters must be positive");
    if (!(lr_rot > 0.0) || !(lr_trans > 0.0)) throw ValidationError("pose config: learning rates must be positive");
    if (convergence_window <= 0 || !(convergence_tol >= 0.0))
        throw ValidationError("pose config: bad convergence settings");
    if (!(lr_final_scale > 0.0 && lr_final_scale <= 1.0))
        throw ValidationError("pose config: lr_final_scale must lie in (0, 1]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("pose config: gamma must lie in [0, 1]");
    if (!(probe_step > 0.0) || !(min_curvature >= 0.0)) throw ValidationError("pose config: bad probe settings");
}

double masked_loss_rgb(const Image& render, const Frame& target, double gamma, bool mask_kea, Image* grad) {
    if (!mask_kea || target.mask.count() == 0) return loss_rgb(render, target.image, gamma, grad);
    Image r = render;
    for (std::size_t p = 0; p < r.pixel_count(); ++p)
        if (target.mask.data[p])
            for (int c = 0; c < 3; ++c) r.data[3 * p + c] = target.image.data[3 * p + c];
    const double value = loss_rgb(r, target.image, gamma, grad);
    if (grad)
        for (std::size_t p = 0; p < r.pixel_count(); ++p)
            if (target.mask.data[p])
                for (int c = 0; c < 3; ++c) grad->data[3 * p + c] = 0.0;
    return value;
}

PoseEstimate estimate_relative_pose(const GaussianScene& scene, const Frame& next_frame,
                                    const CameraIntrinsics& k, const PoseEstimateConfig& cfg) {
    return estimate_relative_pose(scene, PoseSE3::identity(), next_frame, k, cfg);
}

PoseEstimate estimate_relative_pose(const GaussianScene& scene, const PoseSE3& reference,
                                    const Frame& next_frame, const CameraIntrinsics& k,
                                    const PoseEstimateConfig& cfg) {
    cfg.validate();
    k.validate();
    if (scene.empty()) throw ValidationError("estimate_relative_pose: empty scene");
    if (next_frame.image.width != k.width || next_frame.image.height != k.height)
        throw ValidationError("estimate_relative_pose: frame size differs from intrinsics");

    auto evaluate = [&](const PoseSE3& m, Vec6* grad) {
        const PoseSE3 w2c = se3_compose(m, reference);
        const RenderOutput out = render(scene, w2c, k, cfg.background);
        Image d_color;
        const double loss = masked_loss_rgb(out.color, next_frame, cfg.gamma, cfg.mask_kea, grad ? &d_color : nullptr);
        if (grad) {
            RenderCotangents cot;
            cot.color = std::move(d_color);
            *grad = render_backward(scene, w2c, k, cfg.background, cot).pose;
        }
        return loss;
    };

    PoseSE3 current = cfg.init.value_or(PoseSE3::identity());
    PoseSE3 best = current;
    double best_loss = std::numeric_limits<double>::infinity();
    double lr_scale = 1.0;
    double window_start_loss = best_loss;
    bool window_rejected = false;
    Adam adam(6);

    PoseEstimate result;
    int it = 0;
    for (; it < cfg.max_iters; ++it) {
        Vec6 g;
        const double loss = evaluate(current, &g);
        if (!std::isfinite(loss) || !g.allFinite())
            throw NumericalError("estimate_relative_pose: diverged at iteration " + std::to_string(it), it);

        if (loss < best_loss) {
            best_loss = loss;
            best = current;
        } else if (loss > 1.1 * best_loss) {
            // Trust fallback: return to the best pose with fresh moments and a smaller step.
            current = best;
            adam.reset();
            lr_scale *= 0.5;
            window_rejected = true;
            continue;
        }
        if (it % cfg.convergence_window == 0) {
            // A window with rejected steps was still adapting its step size.
            if (it > 0 && !window_rejected && window_start_loss - best_loss <= cfg.convergence_tol * window_start_loss)
                break;
            window_start_loss = best_loss;
            window_rejected = false;
        }

        const double decay = lr_scale * std::pow(cfg.lr_final_scale, static_cast<double>(it) / cfg.max_iters);
        adam.begin_step();
        Vec6 step;
        for (int j = 0; j < 6; ++j) step[j] = adam.delta(j, g[j], (j < 3 ? cfg.lr_rot : cfg.lr_trans) * decay);
        current = se3_compose(se3_exp(step), current);
    }
    result.iterations = it;

    // The last accepted iterate has not been scored yet.
    const double last = evaluate(current, nullptr);
    if (std::isfinite(last) && last < best_loss) {
        best_loss = last;
        best = current;
    }
    result.relative = best;
    result.final_loss = best_loss;

    for (int j = 0; j < 6; ++j) {
        Vec6 d = Vec6::Zero();
        d[j] = cfg.probe_step;
        const double plus = evaluate(se3_compose(se3_exp(d), best), nullptr);
        const double minus = evaluate(se3_compose(se3_exp(-d), best), nullptr);
        result.curvature[j] = (plus + minus - 2.0 * best_loss) / (cfg.probe_step * cfg.probe_step);
    }
    result.low_confidence = result.curvature.minCoeff() < cfg.min_curvature;
    return result;
}

} // namespace keasplat
