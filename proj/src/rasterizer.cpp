// SPDX-License-Identifier: Apache-2.0
#include "keasplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "keasplat/sh.hpp"

namespace keasplat {

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;
using C = RasterConstants;

constexpr double kCutoffPower = -0.5 * C::kSigmaExtent * C::kSigmaExtent;
constexpr double kDepthAlphaEps = 1e-12;

// Everything the compositor and the backward pass need about one visible Gaussian.
struct Splat {
    int index = 0;
    Vec3 p_cam;
    Vec2 mean;
    Mat2 cov2d;
    Mat2 conic;
    Mat23 jac;
    Mat3 cov_world;
    Mat3 cov_cam;
    Vec3 view_dir;  // mu - camera center, unnormalized
    double opacity = 0.0;
    Vec3 color;
    std::array<bool, 3> clamped{};
    Vec2 m;
    int tile_x0 = 0, tile_x1 = -1, tile_y0 = 0, tile_y1 = -1;
};

struct Binned {
    std::vector<Splat> splats;  // front to back
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::vector<int>> tiles;  // splat ids per tile, front to back
};

bool project(const Gaussian& g, const Mat3& W, const Vec3& t, const CameraIntrinsics& k, Splat& s) {
    s.p_cam = W * g.mu + t;
    const double x = s.p_cam.x(), y = s.p_cam.y(), z = s.p_cam.z();
    if (z <= C::kNearPlane) return false;

    s.cov_world = covariance_from(g.rot, g.log_scale);
    s.cov_cam = W * s.cov_world * W.transpose();
    const double iz = 1.0 / z;
    s.jac << k.fx * iz, 0.0, -k.fx * x * iz * iz,
             0.0, k.fy * iz, -k.fy * y * iz * iz;
    s.cov2d = s.jac * s.cov_cam * s.jac.transpose();
    s.cov2d(0, 1) = s.cov2d(1, 0) = 0.5 * (s.cov2d(0, 1) + s.cov2d(1, 0));
    s.cov2d(0, 0) += C::kLowPass;
    s.cov2d(1, 1) += C::kLowPass;
    s.mean = Vec2(k.fx * x * iz + k.cx, k.fy * y * iz + k.cy);

    const double det = s.cov2d.determinant();
    if (!(det > 0.0)) return false;
    s.conic << s.cov2d(1, 1) / det, -s.cov2d(0, 1) / det, -s.cov2d(1, 0) / det, s.cov2d(0, 0) / det;

    const double mid = 0.5 * (s.cov2d(0, 0) + s.cov2d(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    const double radius = std::ceil(C::kSigmaExtent * std::sqrt(lambda_max));
    const double px0 = std::max(0.0, std::ceil(s.mean.x() - radius));
    const double px1 = std::min<double>(k.width - 1, std::floor(s.mean.x() + radius));
    const double py0 = std::max(0.0, std::ceil(s.mean.y() - radius));
    const double py1 = std::min<double>(k.height - 1, std::floor(s.mean.y() + radius));
    if (px0 > px1 || py0 > py1) return false;
    s.tile_x0 = static_cast<int>(px0) / C::kTileSize;
    s.tile_x1 = static_cast<int>(px1) / C::kTileSize;
    s.tile_y0 = static_cast<int>(py0) / C::kTileSize;
    s.tile_y1 = static_cast<int>(py1) / C::kTileSize;
    return true;
}

Binned bin_scene(const GaussianScene& scene, const PoseSE3& world_to_cam, const CameraIntrinsics& k) {
    k.validate();
    const Mat3& W = world_to_cam.rotation();
    const Vec3& t = world_to_cam.translation();
    const Vec3 cam_center = -W.transpose() * t;

    Binned b;
    b.tiles_x = (k.width + C::kTileSize - 1) / C::kTileSize;
    b.tiles_y = (k.height + C::kTileSize - 1) / C::kTileSize;
    b.tiles.resize(static_cast<std::size_t>(b.tiles_x) * b.tiles_y);

    for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
        const Gaussian& g = scene.gaussians[i];
        if (!g.finite())
            throw NumericalError("render: non-finite parameter in Gaussian " + std::to_string(i),
                                 static_cast<std::ptrdiff_t>(i));
        Splat s;
        s.index = static_cast<int>(i);
        if (!project(g, W, t, k, s)) continue;
        s.opacity = sigmoid(g.opacity_logit);
        s.view_dir = g.mu - cam_center;
        const double n = s.view_dir.norm();
        const ShBasis basis = sh_basis(g.sh_degree(), n > 0.0 ? Vec3(s.view_dir / n) : Vec3(0, 0, 1));
        const Vec3 raw = sh_color(basis, g.sh);
        for (int c = 0; c < 3; ++c) {
            s.clamped[c] = raw[c] < 0.0;
            s.color[c] = s.clamped[c] ? 0.0 : raw[c];
        }
        s.m = g.m;
        b.splats.push_back(std::move(s));
    }

    // Global front-to-back order; ties broken by Gaussian index for determinism.
    std::stable_sort(b.splats.begin(), b.splats.end(), [](const Splat& a, const Splat& c) {
        return a.p_cam.z() < c.p_cam.z() || (a.p_cam.z() == c.p_cam.z() && a.index < c.index);
    });
    for (std::size_t s = 0; s < b.splats.size(); ++s) {
        const Splat& sp = b.splats[s];
        for (int ty = sp.tile_y0; ty <= sp.tile_y1; ++ty)
            for (int tx = sp.tile_x0; tx <= sp.tile_x1; ++tx)
                b.tiles[static_cast<std::size_t>(ty) * b.tiles_x + tx].push_back(static_cast<int>(s));
    }
    return b;
}

struct TileRect {
    int x0, x1, y0, y1;
};

TileRect tile_rect(int tile, int tiles_x, const CameraIntrinsics& k) {
    const int tx = tile % tiles_x, ty = tile / tiles_x;
    return {tx * C::kTileSize, std::min(k.width, (tx + 1) * C::kTileSize), ty * C::kTileSize,
            std::min(k.height, (ty + 1) * C::kTileSize)};
}

// Gaussian falloff exponent at pixel offset d = pixel - mean.
inline double splat_power(const Mat2& q, double dx, double dy) {
    return -0.5 * (q(0, 0) * dx * dx + 2.0 * q(0, 1) * dx * dy + q(1, 1) * dy * dy);
}

double cot(const Image& img, std::size_t pixel, int c) {
    return img.empty() ? 0.0 : img.data[pixel * img.channels + c];
}

// Per (tile, list position) gradient slot; summed per splat in tile order.
struct EntryGrad {
    Vec2 d_mean = Vec2::Zero();
    Mat2 d_conic = Mat2::Zero();
    double d_opacity = 0.0;
    Vec3 d_color = Vec3::Zero();
    Vec2 d_m = Vec2::Zero();
    double d_z = 0.0;
};

struct Contribution {
    int list_pos;
    double tau, falloff, transmittance, dx, dy;
};

Vec4 rotation_matrix_grad_to_quat(const Vec4& q, const Mat3& g) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    return 2.0 * Vec4(
        -z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1),
        y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2),
        -2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2),
        -2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
}

} // namespace

std::optional<ProjectedGaussian> project_gaussian(const Gaussian& g, const PoseSE3& world_to_cam,
                                                  const CameraIntrinsics& k) {
    k.validate();
    Splat s;
    if (!project(g, world_to_cam.rotation(), world_to_cam.translation(), k, s)) return std::nullopt;
    return ProjectedGaussian{s.mean, s.cov2d, s.p_cam.z()};
}

void RenderGrads::resize(const GaussianScene& scene) {
    const std::size_t n = scene.size();
    mu.assign(n, Vec3::Zero());
    log_scale.assign(n, Vec3::Zero());
    rot.assign(n, Vec4::Zero());
    opacity_logit.assign(n, 0.0);
    sh.resize(n);
    for (std::size_t i = 0; i < n; ++i) sh[i] = Eigen::VectorXd::Zero(scene.gaussians[i].sh.size());
    m.assign(n, Vec2::Zero());
    mean2d.assign(n, Vec2::Zero());
    visible.assign(n, 0);
    pose.setZero();
}

RenderOutput render(const GaussianScene& scene, const PoseSE3& world_to_cam, const CameraIntrinsics& k,
                    const Vec3& background) {
    const Binned b = bin_scene(scene, world_to_cam, k);

    RenderOutput out;
    out.color = Image(k.width, k.height, 3);
    out.identity = Image(k.width, k.height, 2);
    out.alpha = Image(k.width, k.height, 1);
    out.depth = Image(k.width, k.height, 1);
    out.contributor_count.assign(out.alpha.pixel_count(), 0);

    const int tile_count = static_cast<int>(b.tiles.size());
#pragma omp parallel for schedule(dynamic)
    for (int tile = 0; tile < tile_count; ++tile) {
        const auto& list = b.tiles[tile];
        const TileRect r = tile_rect(tile, b.tiles_x, k);
        for (int py = r.y0; py < r.y1; ++py) {
            for (int px = r.x0; px < r.x1; ++px) {
                double T = 1.0;
                Vec3 color = Vec3::Zero();
                Vec2 ident = Vec2::Zero();
                double depth_sum = 0.0;
                int count = 0;
                for (int id : list) {
                    const Splat& s = b.splats[id];
                    const double dx = px - s.mean.x(), dy = py - s.mean.y();
                    const double power = splat_power(s.conic, dx, dy);
                    if (power < kCutoffPower) continue;
                    const double tau = s.opacity * std::exp(power);
                    const double w = tau * T;
                    color += w * s.color;
                    ident += w * s.m;
                    depth_sum += w * s.p_cam.z();
                    ++count;
                    T *= 1.0 - tau;
                    if (T < C::kMinTransmittance) break;
                }
                const std::size_t p = static_cast<std::size_t>(py) * k.width + px;
                for (int c = 0; c < 3; ++c) out.color.data[3 * p + c] = color[c] + T * background[c];
                out.identity.data[2 * p] = ident[0];
                out.identity.data[2 * p + 1] = ident[1];
                const double a = 1.0 - T;
                out.alpha.data[p] = a;
                out.depth.data[p] = a > kDepthAlphaEps ? depth_sum / a : 0.0;
                out.contributor_count[p] = count;
            }
        }
    }
    return out;
}

RenderGrads render_backward(const GaussianScene& scene, const PoseSE3& world_to_cam,
                            const CameraIntrinsics& k, const Vec3& background,
                            const RenderCotangents& d_output, const BackwardOptions& options) {
    const Binned b = bin_scene(scene, world_to_cam, k);
    auto check = [&](const Image& img, int channels, const char* name) {
        if (!img.empty() && (img.width != k.width || img.height != k.height || img.channels != channels))
            throw ValidationError(std::string("render_backward: bad cotangent shape for ") + name);
    };
    check(d_output.color, 3, "color");
    check(d_output.identity, 2, "identity");
    check(d_output.alpha, 1, "alpha");
    check(d_output.depth, 1, "depth");

    RenderGrads grads;
    grads.resize(scene);

    std::vector<std::size_t> offsets(b.tiles.size() + 1, 0);
    for (std::size_t t = 0; t < b.tiles.size(); ++t) offsets[t + 1] = offsets[t] + b.tiles[t].size();
    std::vector<EntryGrad> entries(offsets.back());

    const int tile_count = static_cast<int>(b.tiles.size());
#pragma omp parallel
    {
        std::vector<Contribution> contribs;
#pragma omp for schedule(dynamic)
        for (int tile = 0; tile < tile_count; ++tile) {
            const auto& list = b.tiles[tile];
            EntryGrad* slots = entries.data() + offsets[tile];
            const TileRect r = tile_rect(tile, b.tiles_x, k);
            for (int py = r.y0; py < r.y1; ++py) {
                for (int px = r.x0; px < r.x1; ++px) {
                    const std::size_t p = static_cast<std::size_t>(py) * k.width + px;
                    const Vec3 gC(cot(d_output.color, p, 0), cot(d_output.color, p, 1), cot(d_output.color, p, 2));
                    const Vec2 gI(cot(d_output.identity, p, 0), cot(d_output.identity, p, 1));
                    const double gA = cot(d_output.alpha, p, 0);
                    const double gD = cot(d_output.depth, p, 0);
                    if (gC.isZero(0) && gI.isZero(0) && gA == 0.0 && gD == 0.0) continue;

                    // Replay the forward pass for this pixel.
                    contribs.clear();
                    double T = 1.0, depth_sum = 0.0;
                    for (int pos = 0; pos < static_cast<int>(list.size()); ++pos) {
                        const Splat& s = b.splats[list[pos]];
                        const double dx = px - s.mean.x(), dy = py - s.mean.y();
                        const double power = splat_power(s.conic, dx, dy);
                        if (power < kCutoffPower) continue;
                        const double falloff = std::exp(power);
                        const double tau = s.opacity * falloff;
                        contribs.push_back({pos, tau, falloff, T, dx, dy});
                        depth_sum += tau * T * s.p_cam.z();
                        T *= 1.0 - tau;
                        if (T < C::kMinTransmittance) break;
                    }
                    const double a = 1.0 - T;
                    double gA_eff = gA, gDn = 0.0;
                    if (a > kDepthAlphaEps) {
                        gDn = gD / a;
                        gA_eff -= gD * (depth_sum / a) / a;
                    }

                    // Back to front; S_* hold what is composited behind splat j.
                    Vec3 S_c = background;
                    Vec2 S_m = Vec2::Zero();
                    double S_1 = 0.0, S_z = 0.0;
                    for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
                        const Splat& s = b.splats[list[it->list_pos]];
                        EntryGrad& e = slots[it->list_pos];
                        const double tau = it->tau, Tj = it->transmittance, w = tau * Tj;
                        const double z = s.p_cam.z();
                        e.d_color += w * gC;
                        e.d_m += w * gI;
                        e.d_z += w * gDn;
                        double d_tau = Tj * (gC.dot(s.color - S_c) + gA_eff * (1.0 - S_1) + gDn * (z - S_z));
                        if (options.identity_drives_geometry) d_tau += Tj * gI.dot(s.m - S_m);
                        S_c = tau * s.color + (1.0 - tau) * S_c;
                        S_m = tau * s.m + (1.0 - tau) * S_m;
                        S_1 = tau + (1.0 - tau) * S_1;
                        S_z = tau * z + (1.0 - tau) * S_z;

                        e.d_opacity += d_tau * it->falloff;
                        const double d_power = d_tau * tau;
                        const Vec2 d(it->dx, it->dy);
                        e.d_mean += d_power * (s.conic * d);
                        e.d_conic += d_power * (-0.5 * d * d.transpose());
                    }
                }
            }
        }
    }

    // Deterministic reduction: tiles in index order.
    std::vector<EntryGrad> per_splat(b.splats.size());
    for (std::size_t t = 0; t < b.tiles.size(); ++t) {
        const auto& list = b.tiles[t];
        for (std::size_t pos = 0; pos < list.size(); ++pos) {
            const EntryGrad& e = entries[offsets[t] + pos];
            EntryGrad& acc = per_splat[list[pos]];
            acc.d_mean += e.d_mean;
            acc.d_conic += e.d_conic;
            acc.d_opacity += e.d_opacity;
            acc.d_color += e.d_color;
            acc.d_m += e.d_m;
            acc.d_z += e.d_z;
        }
    }

    const Mat3& W = world_to_cam.rotation();
    std::vector<Vec6> pose_parts(b.splats.size(), Vec6::Zero());
    const int splat_count = static_cast<int>(b.splats.size());
#pragma omp parallel for schedule(static)
    for (int si = 0; si < splat_count; ++si) {
        const Splat& s = b.splats[si];
        const EntryGrad& e = per_splat[si];
        const Gaussian& g = scene.gaussians[s.index];
        const int gi = s.index;

        grads.visible[gi] = 1;
        grads.mean2d[gi] = e.d_mean;
        grads.m[gi] = e.d_m;
        grads.opacity_logit[gi] = e.d_opacity * s.opacity * (1.0 - s.opacity);

        // conic -> 2D covariance -> camera covariance and Jacobian
        const Mat2 G_cov = -s.conic * e.d_conic * s.conic;
        const Mat3 G_cov_cam = s.jac.transpose() * G_cov * s.jac;
        const Mat23 G_jac = 2.0 * G_cov * s.jac * s.cov_cam;
        const Mat3 G_cov_world = W.transpose() * G_cov_cam * W;
        const Mat3 G_W = 2.0 * G_cov_cam * W * s.cov_world;

        // Sigma = M M^T, M = R diag(s)
        const Mat3 R = quat_to_rotation(g.rot);
        const Vec3 scale = g.scale();
        const Mat3 M = R * scale.asDiagonal();
        const Mat3 G_M = 2.0 * G_cov_world * M;
        for (int j = 0; j < 3; ++j) grads.log_scale[gi][j] = G_M.col(j).dot(R.col(j)) * scale[j];
        const Mat3 G_R = G_M * scale.asDiagonal();
        const double qn = g.rot.norm();
        const Vec4 qhat = g.rot / qn;
        const Vec4 G_qhat = rotation_matrix_grad_to_quat(qhat, G_R);
        grads.rot[gi] = (G_qhat - qhat * qhat.dot(G_qhat)) / qn;

        // camera-space position: projected mean, Jacobian entries, depth channel
        const double x = s.p_cam.x(), y = s.p_cam.y(), z = s.p_cam.z();
        const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
        Vec3 G_p;
        G_p.x() = e.d_mean.x() * k.fx * iz - G_jac(0, 2) * k.fx * iz2;
        G_p.y() = e.d_mean.y() * k.fy * iz - G_jac(1, 2) * k.fy * iz2;
        G_p.z() = -e.d_mean.x() * k.fx * x * iz2 - e.d_mean.y() * k.fy * y * iz2
                  - G_jac(0, 0) * k.fx * iz2 + G_jac(0, 2) * 2.0 * k.fx * x * iz3
                  - G_jac(1, 1) * k.fy * iz2 + G_jac(1, 2) * 2.0 * k.fy * y * iz3
                  + e.d_z;

        Vec3 G_mu = W.transpose() * G_p;
        Vec6 gp = Vec6::Zero();
        gp.head<3>() = s.p_cam.cross(G_p);
        gp.tail<3>() = G_p;
        const Mat3 A = W * G_W.transpose();
        gp.head<3>() += Vec3(A(1, 2) - A(2, 1), A(2, 0) - A(0, 2), A(0, 1) - A(1, 0));

        // color through the SH evaluation and the view direction
        Vec3 G_color = e.d_color;
        for (int c = 0; c < 3; ++c)
            if (s.clamped[c]) G_color[c] = 0.0;
        const double n = s.view_dir.norm();
        const Vec3 dir = n > 0.0 ? Vec3(s.view_dir / n) : Vec3(0, 0, 1);
        const ShBasis basis = sh_basis(g.sh_degree(), dir);
        const Vec3 G_dir = sh_color_backward(basis, g.sh, G_color, grads.sh[gi]);
        if (n > 0.0 && basis.count > 1) {
            const Vec3 G_view = (G_dir - dir * dir.dot(G_dir)) / n;
            G_mu += G_view;
            // camera center moves by -W^T v under the perturbation
            gp.tail<3>() += W * G_view;
        }
        grads.mu[gi] = G_mu;
        pose_parts[si] = gp;
    }
    for (const Vec6& gp : pose_parts) grads.pose += gp;
    return grads;
}

void accumulate_view_space_gradients(GaussianScene& scene, const std::vector<Vec2>& mean2d_grad,
                                     const std::vector<std::uint8_t>& visible, const CameraIntrinsics& k) {
    scene.check_invariants();
    if (mean2d_grad.size() != scene.size() || visible.size() != scene.size())
        throw ValidationError("accumulate_view_space_gradients: size mismatch");
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (!visible[i]) continue;
        const double g = Vec2(mean2d_grad[i].x() * 0.5 * k.width, mean2d_grad[i].y() * 0.5 * k.height).norm();
        scene.denom[i] += 1;
        scene.grad_accum[i] += (g - scene.grad_accum[i]) / static_cast<double>(scene.denom[i]);
    }
}

} // namespace keasplat
