// SPDX-License-Identifier: Apache-2.0
#include "keasplat/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "keasplat/knn.hpp"
#include "keasplat/ssim.hpp"

namespace keasplat {

namespace {

Vec2 softmax2(const Vec2& m) {
    const double p1 = sigmoid(m[1] - m[0]);
    return Vec2(1.0 - p1, p1);
}

// p log(2p / (p + q)) with 0 log 0 = 0.
double half_term(double p, double q) { return p > 0.0 ? p * std::log(2.0 * p / (p + q)) : 0.0; }

double jsd(const Vec2& p, const Vec2& q) {
    return 0.5 * (half_term(p[0], q[0]) + half_term(p[1], q[1]) + half_term(q[0], p[0]) + half_term(q[1], p[1]));
}

// d JSD(p, q) / d m_p pushed through the two-class softmax.
Vec2 jsd_grad_logits(const Vec2& p, const Vec2& q) {
    const double w = p[0] * p[1];
    if (w == 0.0) return Vec2::Zero();
    const double g0 = 0.5 * std::log(2.0 * p[0] / (p[0] + q[0]));
    const double g1 = 0.5 * std::log(2.0 * p[1] / (p[1] + q[1]));
    const double d1 = (g1 - g0) * w;
    return Vec2(-d1, d1);
}

std::vector<Vec3> means(const std::vector<Gaussian>& gs) {
    std::vector<Vec3> out;
    out.reserve(gs.size());
    for (const auto& g : gs) out.push_back(g.mu);
    return out;
}

using Feature = Eigen::Matrix<double, 16, 1>;

// One direction of the Chamfer sum. grad_from/grad_to receive d/d feature.
double chamfer_direction(const std::vector<Feature>& from, const std::vector<Gaussian>& from_g,
                         const std::vector<Feature>& to, const KdTree3& to_tree,
                         std::vector<Feature>* grad_from, std::vector<Feature>* grad_to) {
    const double inv = 1.0 / static_cast<double>(from.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i) {
        const int j = to_tree.nearest_one(from_g[i].mu);
        const Feature diff = from[i] - to[j];
        sum += diff.squaredNorm();
        if (grad_from) (*grad_from)[i] += 2.0 * inv * diff;
        if (grad_to) (*grad_to)[j] -= 2.0 * inv * diff;
    }
    return sum * inv;
}

} // namespace

void LossWeights::validate() const {
    const double all[] = {gamma, lambda_bce, lambda_jsd, lambda_rgb, lambda_kea, lambda_ipc, lambda_pc};
    for (double v : all)
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("loss weights must be finite and non-negative");
    if (gamma > 1.0) throw ValidationError("loss weights: gamma must not exceed 1");
}

double loss_l1(const Image& render, const Image& target, Image* grad) {
    require_same_shape(render, target, "loss_l1");
    const double inv = 1.0 / static_cast<double>(render.data.size());
    if (grad) *grad = Image(render.width, render.height, render.channels);
    double sum = 0.0;
    for (std::size_t i = 0; i < render.data.size(); ++i) {
        const double d = render.data[i] - target.data[i];
        sum += std::abs(d);
        if (grad) grad->data[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
    }
    return sum * inv;
}

double loss_rgb(const Image& render, const Image& target, double gamma, Image* grad) {
    require_same_shape(render, target, "loss_rgb");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("loss_rgb: gamma must lie in [0, 1]");
    double value = 0.0;
    if (gamma < 1.0) {
        value += (1.0 - gamma) * loss_l1(render, target, grad);
        if (grad)
            for (double& g : grad->data) g *= 1.0 - gamma;
    } else if (grad) {
        *grad = Image(render.width, render.height, render.channels);
    }
    if (gamma > 0.0) {
        Image g_ssim;
        value += gamma * d_ssim(render, target, grad ? &g_ssim : nullptr);
        if (grad)
            for (std::size_t i = 0; i < grad->data.size(); ++i) grad->data[i] += gamma * g_ssim.data[i];
    }
    return value;
}

double kea_probability(const Vec2& m) { return sigmoid(m[1] - m[0]); }

int kea_identity(const Vec2& m) { return m[1] > m[0] ? 1 : 0; }

double loss_bce(const Image& identity, const Mask& mask, Image* grad) {
    if (identity.channels != 2 || identity.width != mask.width || identity.height != mask.height)
        throw ValidationError("loss_bce: identity render and mask shapes differ");
    const std::size_t n = identity.pixel_count();
    const double inv = 1.0 / static_cast<double>(n);
    if (grad) *grad = Image(identity.width, identity.height, 2);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double raw = sigmoid(identity.data[2 * i + 1] - identity.data[2 * i]);
        const double p = std::clamp(raw, kBceClamp, 1.0 - kBceClamp);
        const double target = mask.data[i] ? 1.0 : 0.0;
        sum -= target * std::log(p) + (1.0 - target) * std::log(1.0 - p);
        if (grad && raw == p) {
            // d/dz of BCE(sigmoid(z)) is p - target, with z = m1 - m0.
            const double g = (p - target) * inv;
            grad->data[2 * i] = -g;
            grad->data[2 * i + 1] = g;
        }
    }
    return sum * inv;
}

double loss_jsd(const GaussianScene& scene, int sample_count, int neighbor_count, std::uint64_t seed,
                std::vector<Vec2>* grad_m) {
    const auto n = static_cast<int>(scene.size());
    if (neighbor_count < 1 || sample_count < 1) throw ValidationError("loss_jsd: Y and Z must be positive");
    if (n <= neighbor_count) throw ValidationError("loss_jsd: scene needs more than Z Gaussians");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    const int y = std::min(sample_count, n);
    std::mt19937_64 rng(seed);
    for (int i = 0; i < y; ++i) {
        std::uniform_int_distribution<int> pick(i, n - 1);
        std::swap(order[i], order[pick(rng)]);
    }

    const KdTree3 tree(means(scene.gaussians));
    if (grad_m) grad_m->assign(n, Vec2::Zero());
    const double inv = 1.0 / (static_cast<double>(y) * neighbor_count);
    double sum = 0.0;
    for (int s = 0; s < y; ++s) {
        const int i = order[s];
        const Vec2 p = softmax2(scene.gaussians[i].m);
        for (int j : tree.nearest(scene.gaussians[i].mu, neighbor_count, i)) {
            const Vec2 q = softmax2(scene.gaussians[j].m);
            sum += jsd(p, q);
            if (grad_m) {
                (*grad_m)[i] += inv * jsd_grad_logits(p, q);
                (*grad_m)[j] += inv * jsd_grad_logits(q, p);
            }
        }
    }
    return sum * inv;
}

Eigen::VectorXd anchor_parameters(const Gaussian& g) {
    Eigen::VectorXd v(11 + g.sh.size());
    v << g.mu, g.log_scale, g.rot, g.opacity_logit, g.sh;
    return v;
}

void AnchorState::validate() const {
    if (params.size() != anchored_ids.size() || age_weight.size() != anchored_ids.size())
        throw ValidationError("anchor state: misaligned arrays");
    for (double w : age_weight)
        if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("anchor state: age weight outside [0, 1]");
}

double anchor_age_weight(std::int64_t created_at, std::int64_t step, double maturity) {
    if (maturity <= 0.0) return 1.0;
    const double age = static_cast<double>(std::max<std::int64_t>(0, step - created_at));
    return std::min(1.0, age / maturity);
}

AnchorState capture_anchors(const GaussianScene& scene, std::int64_t step, double maturity) {
    AnchorState a;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Gaussian& g = scene.gaussians[i];
        if (kea_identity(g.m) != 1) continue;
        a.anchored_ids.push_back(i);
        a.params.push_back(anchor_parameters(g));
        a.age_weight.push_back(anchor_age_weight(g.created_at, step, maturity));
    }
    return a;
}

void refresh_anchor_weights(AnchorState& anchors, const GaussianScene& scene, std::int64_t step, double maturity) {
    for (std::size_t k = 0; k < anchors.size(); ++k) {
        const std::size_t i = anchors.anchored_ids[k];
        if (i >= scene.size()) throw ValidationError("anchor state: stale Gaussian index");
        anchors.age_weight[k] = anchor_age_weight(scene.gaussians[i].created_at, step, maturity);
    }
}

double loss_ipc(const GaussianScene& scene, const AnchorState& anchors, AnchorGrad* grad) {
    anchors.validate();
    double weight_sum = 0.0;
    for (std::size_t k = 0; k < anchors.size(); ++k) {
        if (anchors.anchored_ids[k] >= scene.size())
            throw ValidationError("loss_ipc: stale anchored id " + std::to_string(anchors.anchored_ids[k]));
        weight_sum += anchors.age_weight[k];
    }
    if (grad) {
        grad->ids = anchors.anchored_ids;
        grad->d_params.assign(anchors.size(), Eigen::VectorXd());
    }
    if (weight_sum <= 0.0) {
        if (grad)
            for (std::size_t k = 0; k < anchors.size(); ++k)
                grad->d_params[k] = Eigen::VectorXd::Zero(anchors.params[k].size());
        return 0.0;
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < anchors.size(); ++k) {
        const Eigen::VectorXd cur = anchor_parameters(scene.gaussians[anchors.anchored_ids[k]]);
        if (cur.size() != anchors.params[k].size())
            throw ValidationError("loss_ipc: anchor parameter layout differs from the Gaussian");
        const Eigen::VectorXd diff = cur - anchors.params[k];
        sum += anchors.age_weight[k] * diff.squaredNorm();
        if (grad) grad->d_params[k] = (2.0 * anchors.age_weight[k] / weight_sum) * diff;
    }
    return sum / weight_sum;
}

Eigen::Matrix<double, 16, 1> chamfer_features(const Gaussian& g) {
    Feature f;
    Vec4 q = normalize_quat(g.rot);
    if (q[0] < 0.0) q = -q;
    const Vec2 p = softmax2(g.m);
    f << g.mu, g.scale(), q, sigmoid(g.opacity_logit), g.sh[0], g.sh[1], g.sh[2], p;
    return f;
}

double chamfer(const std::vector<Gaussian>& a, const std::vector<Gaussian>& b) {
    Vec6 unused;
    return chamfer_with_pose_grad(a, b, unused);
}

double chamfer_with_pose_grad(const std::vector<Gaussian>& a, const std::vector<Gaussian>& b, Vec6& grad) {
    if (a.empty() || b.empty()) throw ValidationError("chamfer: empty Gaussian set");
    std::vector<Feature> fa, fb;
    fa.reserve(a.size());
    fb.reserve(b.size());
    for (const auto& g : a) fa.push_back(chamfer_features(g));
    for (const auto& g : b) fb.push_back(chamfer_features(g));
    const KdTree3 tree_a(means(a)), tree_b(means(b));

    std::vector<Feature> gb(b.size(), Feature::Zero());
    const double value = chamfer_direction(fa, a, fb, tree_b, nullptr, &gb) +
                         chamfer_direction(fb, b, fa, tree_a, &gb, nullptr);

    // Perturbation exp(delta) moves mu by omega x mu + v and the unit
    // quaternion by 0.5 (0, omega) * q.
    grad.setZero();
    for (std::size_t i = 0; i < b.size(); ++i) {
        const Vec3 g_mu = gb[i].segment<3>(0);
        grad.head<3>() += b[i].mu.cross(g_mu);
        grad.tail<3>() += g_mu;
        const Vec4 g_q = gb[i].segment<4>(6);
        Vec4 q = normalize_quat(b[i].rot);
        const double sign = q[0] < 0.0 ? -1.0 : 1.0;
        for (int axis = 0; axis < 3; ++axis) {
            Vec4 e = Vec4::Zero();
            e[axis + 1] = 1.0;
            grad[axis] += sign * 0.5 * g_q.dot(quat_multiply(e, q));
        }
    }
    return value;
}

double total_loss(const LossComponents& c, const LossWeights& w) {
    const std::pair<const char*, double> parts[] = {
        {"rgb", c.rgb}, {"bce", c.bce}, {"jsd", c.jsd}, {"ipc", c.ipc}, {"pc", c.pc}};
    for (const auto& [name, v] : parts)
        if (!std::isfinite(v)) throw NumericalError(std::string("total_loss: non-finite component ") + name);
    return w.lambda_rgb * c.rgb + w.lambda_kea * (w.lambda_bce * c.bce + w.lambda_jsd * c.jsd) +
           w.lambda_ipc * c.ipc + w.lambda_pc * c.pc;
}

} // namespace keasplat
