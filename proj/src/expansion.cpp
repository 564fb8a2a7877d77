// SPDX-License-Identifier: Apache-2.0
#include "keasplat/expansion.hpp"

#include <cmath>
#include <random>
#include <string>

#include "keasplat/adam.hpp"
#include "keasplat/rasterizer.hpp"

namespace keasplat {

namespace {

// Per-Gaussian layout of the flat Adam state.
constexpr int kMu = 0, kLogScale = 3, kRot = 6, kOpacity = 10, kM = 11, kSh = 13;

std::uint64_t mix_seed(std::uint64_t seed, std::int64_t step) {
    return seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(step) + 1;
}

struct StepOutput {
    LossComponents components;
    Vec6 pose_grad = Vec6::Zero();
};

// Owns the Adam state for the Gaussians of one scene.
class Trainer {
public:
    Trainer(GaussianScene& scene, const CameraIntrinsics& k, const ExpansionConfig& cfg, const LossWeights& w)
        : scene_(scene), k_(k), cfg_(cfg), w_(w), extent_(std::max(scene_extent(scene), 1e-6)) {
        if (scene.empty()) throw ValidationError("optimization: empty scene");
        sh_size_ = static_cast<int>(scene.gaussians.front().sh.size());
        for (const auto& g : scene.gaussians)
            if (g.sh.size() != sh_size_) throw ValidationError("optimization: mixed SH degrees");
        block_ = kSh + sh_size_;
        adam_ = Adam(scene.size() * block_);
    }

    double extent() const { return extent_; }

    void remap(const std::vector<std::ptrdiff_t>& source) { adam_.remap(source, block_); }

    StepOutput step(const Frame& frame, const PoseSE3& w2c, const AnchorState* anchors, std::int64_t step) {
        const Vec3& bg = cfg_.background;
        const RenderOutput out = render(scene_, w2c, k_, bg);
        StepOutput res;
        LossComponents& c = res.components;

        RenderCotangents cot;
        c.rgb = loss_rgb(out.color, frame.image, w_.gamma, &cot.color);
        for (double& v : cot.color.data) v *= w_.lambda_rgb;
        c.bce = loss_bce(out.identity, frame.mask, &cot.identity);
        for (double& v : cot.identity.data) v *= w_.lambda_kea * w_.lambda_bce;

        std::vector<Vec2> g_jsd;
        if (static_cast<int>(scene_.size()) > cfg_.jsd_neighbors)
            c.jsd = loss_jsd(scene_, cfg_.jsd_samples, cfg_.jsd_neighbors, mix_seed(cfg_.seed, step), &g_jsd);

        AnchorGrad g_ipc;
        std::vector<int> anchor_slot;
        if (anchors) {
            c.ipc = loss_ipc(scene_, *anchors, &g_ipc);
            anchor_slot.assign(scene_.size(), -1);
            for (std::size_t a = 0; a < g_ipc.ids.size(); ++a) anchor_slot[g_ipc.ids[a]] = static_cast<int>(a);
        }

        BackwardOptions opts;
        opts.identity_drives_geometry = false;
        RenderGrads g = render_backward(scene_, w2c, k_, bg, cot, opts);
        res.pose_grad = g.pose;

        // View-space statistics also see the anchor pull on positions, projected at fixed depth.
        std::vector<Vec2> mean2d = g.mean2d;
        if (anchors && w_.lambda_ipc > 0.0) {
            const Mat3& W = w2c.rotation();
            for (std::size_t i = 0; i < scene_.size(); ++i) {
                if (!g.visible[i] || anchor_slot[i] < 0) continue;
                const Vec3 g_cam = W * (w_.lambda_ipc * g_ipc.d_params[anchor_slot[i]].head<3>());
                const double z = w2c.apply(scene_.gaussians[i].mu).z();
                mean2d[i] += Vec2(g_cam.x() * z / k_.fx, g_cam.y() * z / k_.fy);
            }
        }
        accumulate_view_space_gradients(scene_, mean2d, g.visible, k_);

        const LearningRates& lr = cfg_.lr;
        const double lr_mu = lr.position * extent_;
        const double jsd_w = w_.lambda_kea * w_.lambda_jsd;
        adam_.begin_step();
        for (std::size_t i = 0; i < scene_.size(); ++i) {
            Gaussian& gs = scene_.gaussians[i];
            const std::size_t base = i * block_;
            Eigen::VectorXd ipc;
            if (anchors && anchor_slot[i] >= 0) ipc = w_.lambda_ipc * g_ipc.d_params[anchor_slot[i]];
            auto ipc_at = [&](int j) { return ipc.size() ? ipc[j] : 0.0; };

            for (int j = 0; j < 3; ++j) {
                gs.mu[j] += adam_.delta(base + kMu + j, g.mu[i][j] + ipc_at(j), lr_mu);
                gs.log_scale[j] += adam_.delta(base + kLogScale + j, g.log_scale[i][j] + ipc_at(3 + j), lr.scale);
            }
            for (int j = 0; j < 4; ++j) gs.rot[j] += adam_.delta(base + kRot + j, g.rot[i][j] + ipc_at(6 + j), lr.rotation);
            gs.rot = normalize_quat(gs.rot);
            gs.opacity_logit += adam_.delta(base + kOpacity, g.opacity_logit[i] + ipc_at(10), lr.opacity);
            for (int j = 0; j < 2; ++j) {
                const double gj = g.m[i][j] + (g_jsd.empty() ? 0.0 : jsd_w * g_jsd[i][j]);
                gs.m[j] += adam_.delta(base + kM + j, gj, lr.kea);
            }
            for (int j = 0; j < sh_size_; ++j)
                gs.sh[j] += adam_.delta(base + kSh + j, g.sh[i][j] + ipc_at(11 + j), j < 3 ? lr.sh_dc : lr.sh_rest);
            if (!gs.finite())
                throw NumericalError("optimization: Gaussian " + std::to_string(i) + " became non-finite at step " +
                                         std::to_string(step),
                                     static_cast<std::ptrdiff_t>(i));
        }
        return res;
    }

private:
    GaussianScene& scene_;
    const CameraIntrinsics& k_;
    const ExpansionConfig& cfg_;
    LossWeights w_;
    double extent_;
    Eigen::Index sh_size_ = 3;
    std::size_t block_ = 0;
    Adam adam_;
};

std::vector<Gaussian> to_camera(const GaussianScene& scene, const PoseSE3& w2c) {
    std::vector<Gaussian> out;
    out.reserve(scene.size());
    for (const auto& g : scene.gaussians) out.push_back(transform_gaussian(g, w2c));
    return out;
}

} // namespace

void LearningRates::validate() const {
    const double all[] = {position, sh_dc, sh_rest, opacity, scale, rotation, kea, pose_refine};
    for (double v : all)
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("learning rates must be finite and non-negative");
}

DensifyConfig ExpansionConfig::densify_config() const {
    DensifyConfig d;
    d.grad_threshold = densify_grad_threshold;
    d.prune_opacity_threshold = prune_opacity_threshold;
    d.max_points = max_points;
    return d;
}

void ExpansionConfig::validate() const {
    if (iters_per_frame <= 0 || init_iters < 0 || densify_interval < 0)
        throw ValidationError("expansion config: iteration counts must be positive");
    if (init_stride <= 0) throw ValidationError("expansion config: init_stride must be positive");
    if (sh_degree < 0 || sh_degree > 3) throw ValidationError("expansion config: sh_degree must lie in 0..3");
    if (jsd_samples <= 0 || jsd_neighbors <= 0) throw ValidationError("expansion config: JSD sizes must be positive");
    if (!(anchor_maturity >= 0.0)) throw ValidationError("expansion config: anchor_maturity must be non-negative");
    if (!background.allFinite()) throw ValidationError("expansion config: background must be finite");
    densify_config().validate();
    loss_weights.validate();
    pose_cfg.validate();
    lr.validate();
}

GaussianScene init_scene_from_frame(const Frame& frame, const CameraIntrinsics& k, int stride, int sh_degree) {
    k.validate();
    frame.validate();
    if (!frame.depth) throw ValidationError("init_scene_from_frame: frame has no depth");
    if (stride <= 0) throw ValidationError("init_scene_from_frame: stride must be positive");
    if (sh_degree < 0 || sh_degree > 3) throw ValidationError("init_scene_from_frame: SH degree must lie in 0..3");
    if (frame.image.width != k.width || frame.image.height != k.height)
        throw ValidationError("init_scene_from_frame: frame size differs from intrinsics");

    GaussianScene scene;
    const int coeffs = 3 * sh_coeff_count(sh_degree);
    for (int v = 0; v < k.height; v += stride) {
        for (int u = 0; u < k.width; u += stride) {
            const double d = frame.depth->at(u, v, 0);
            Gaussian g;
            g.mu = Vec3(d * (u - k.cx) / k.fx, d * (v - k.cy) / k.fy, d);
            g.log_scale = Vec3::Constant(std::log(d / k.fx * stride));
            g.opacity_logit = logit(0.1);
            g.sh = Eigen::VectorXd::Zero(coeffs);
            for (int c = 0; c < 3; ++c) g.sh[c] = (frame.image.at(u, v, c) - 0.5) / kShC0;
            g.m = Vec2::Zero();
            g.created_at = 0;
            scene.push_back(std::move(g));
        }
    }
    return scene;
}

GaussianScene optimize_single_view(GaussianScene scene, const Frame& frame, const CameraIntrinsics& k, int iters,
                                   const LossWeights& w, const ExpansionConfig& cfg) {
    if (iters < 0) throw ValidationError("optimize_single_view: iters must be non-negative");
    w.validate();
    frame.validate();
    if (iters == 0) return scene;
    Trainer trainer(scene, k, cfg, w);
    for (int it = 0; it < iters; ++it) trainer.step(frame, PoseSE3::identity(), nullptr, it);
    return scene;
}

ReconstructionResult expand_scene(const std::vector<Frame>& frames, const CameraIntrinsics& k,
                                  const ExpansionConfig& cfg, const StepCallback& on_step) {
    cfg.validate();
    k.validate();
    if (frames.size() < 2) throw ValidationError("expand_scene: at least two frames are required");
    for (const auto& f : frames) {
        f.validate();
        if (f.image.width != k.width || f.image.height != k.height)
            throw ValidationError("expand_scene: frame " + std::to_string(f.index) + " differs from intrinsics");
    }
    if (!frames.front().depth) throw ValidationError("expand_scene: frame 0 needs depth");

    ReconstructionResult res;
    GaussianScene& scene = res.scene;
    scene = init_scene_from_frame(frames.front(), k, cfg.init_stride, cfg.sh_degree);
    const LossWeights& w = cfg.loss_weights;
    Trainer trainer(scene, k, cfg, w);
    std::mt19937_64 rng(cfg.seed);
    std::int64_t step = 0;

    auto record = [&](int frame, const LossComponents& c) {
        StepRecord r{step, frame, c, total_loss(c, w)};
        res.loss_history.push_back(r);
        if (on_step) on_step(r);
    };

    std::vector<PoseSE3> w2c{PoseSE3::identity()};
    for (int it = 0; it < cfg.init_iters; ++it, ++step)
        record(0, trainer.step(frames.front(), w2c.front(), nullptr, step).components);
    scene.reset_stats();
    res.anchors = capture_anchors(scene, step, cfg.anchor_maturity);

    auto finish = [&]() {
        res.trajectory.clear();
        for (const auto& p : w2c) res.trajectory.push_back(p.inverse());
        res.relative_poses.clear();
        for (std::size_t i = 1; i < w2c.size(); ++i)
            res.relative_poses.push_back(se3_compose(w2c[i], w2c[i - 1].inverse()));
    };

    const int interval = cfg.effective_densify_interval();
    const DensifyConfig dcfg = cfg.densify_config();
    PoseSE3 velocity = cfg.pose_cfg.init.value_or(PoseSE3::identity());
    std::int64_t expansion_steps = 0;

    for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
        const int next = static_cast<int>(i + 1);
        PoseEstimateConfig pcfg = cfg.pose_cfg;
        pcfg.init = velocity;
        pcfg.background = cfg.background;
        PoseEstimate est;
        try {
            est = estimate_relative_pose(scene, w2c[i], frames[next], k, pcfg);
        } catch (const NumericalError& e) {
            finish();
            throw ReconstructionFailure("expand_scene: pose estimation failed on frame " + std::to_string(next) +
                                            ": " + e.what(),
                                        next, std::move(res));
        }
        res.pose_estimates.push_back(est);
        w2c.push_back(se3_compose(est.relative, w2c[i]));

        // L_pc reference: the scene before this frame's updates, seen through the estimated pose.
        const std::vector<Gaussian> snapshot = to_camera(scene, w2c[next]);
        Adam pose_adam(6);

        const int first = cfg.two_frame_window ? static_cast<int>(i) : 0;
        std::uniform_int_distribution<int> pick(first, next);
        for (int it = 0; it < cfg.iters_per_frame; ++it, ++step) {
            const int f = pick(rng);
            refresh_anchor_weights(res.anchors, scene, step, cfg.anchor_maturity);
            StepOutput out = trainer.step(frames[f], w2c[f], &res.anchors, step);

            Vec6 pc_grad;
            out.components.pc = chamfer_with_pose_grad(snapshot, to_camera(scene, w2c[next]), pc_grad);
            Vec6 pose_grad = w.lambda_pc * pc_grad;
            if (f == next) pose_grad += out.pose_grad;
            pose_adam.begin_step();
            Vec6 delta;
            for (int j = 0; j < 6; ++j) delta[j] = pose_adam.delta(j, pose_grad[j], cfg.lr.pose_refine);
            w2c[next] = se3_compose(se3_exp(delta), w2c[next]);

            record(f, out.components);

            if (++expansion_steps % interval == 0) {
                const DensifyOutcome d = densify_and_prune(scene, dcfg, step, trainer.extent(), rng);
                trainer.remap(d.source);
                res.densify_history.push_back(d.stats);
                res.anchors = capture_anchors(scene, step, cfg.anchor_maturity);
            }
        }
        velocity = se3_compose(w2c[next], w2c[i].inverse());
    }
    finish();
    return res;
}

} // namespace keasplat
