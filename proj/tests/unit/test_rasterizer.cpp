// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "keasplat/rasterizer.hpp"
#include "oracle.hpp"
#include "synthetic.hpp"

using namespace keasplat;

TEST_SUITE("rasterizer") {

TEST_CASE("single pixel matches brute-force compositing") {
    std::mt19937_64 rng(11);
    const CameraIntrinsics k = synth::single_pixel_camera();
    const Vec3 bg(0.2, 0.4, 0.6);
    for (int trial = 0; trial < 200; ++trial) {
        const GaussianScene scene = synth::random_pixel_configuration(rng, 4, k);
        const RenderOutput out = render(scene, PoseSE3::identity(), k, bg);
        const synth::PixelOracle o = synth::brute_force_pixel(scene, PoseSE3::identity(), k, bg, 0.0, 0.0);
        for (int c = 0; c < 3; ++c) CHECK(std::abs(out.color.data[c] - o.color[c]) < 1e-12);
        for (int c = 0; c < 2; ++c) CHECK(std::abs(out.identity.data[c] - o.identity[c]) < 1e-12);
        CHECK(std::abs(out.alpha.data[0] - o.alpha) < 1e-12);
        CHECK(std::abs(out.depth.data[0] - o.depth) < 1e-10);
    }
}

TEST_CASE("whole image matches the oracle away from the cutoff") {
    std::mt19937_64 rng(12);
    const CameraIntrinsics k = synth::small_intrinsics(40, 24, 30.0);
    const GaussianScene scene = synth::random_view_scene(rng, 30, 0, k, 2.0, 4.0, std::log(0.3), std::log(0.6));
    const RenderOutput out = render(scene, PoseSE3::identity(), k, Vec3::Zero());
    int compared = 0;
    for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x) {
            const synth::PixelOracle o = synth::brute_force_pixel(scene, PoseSE3::identity(), k, Vec3::Zero(), x, y);
            if (o.alpha < 0.5) continue;
            ++compared;
            // The renderer drops splats beyond 3 sigma; their share is below exp(-4.5) each.
            for (int c = 0; c < 3; ++c) CHECK(std::abs(out.color.at(x, y, c) - o.color[c]) < 0.1);
        }
    CHECK(compared > 100);
}

TEST_CASE("empty scene renders the background") {
    const CameraIntrinsics k = synth::small_intrinsics(20, 17, 20.0);
    const RenderOutput out = render(GaussianScene{}, PoseSE3::identity(), k, Vec3(0.1, 0.2, 0.3));
    for (std::size_t p = 0; p < out.alpha.pixel_count(); ++p) {
        CHECK(out.color.data[3 * p + 2] == 0.3);
        CHECK(out.alpha.data[p] == 0.0);
        CHECK(out.depth.data[p] == 0.0);
        CHECK(out.identity.data[2 * p] == 0.0);
    }
}

TEST_CASE("Gaussians behind the camera are culled") {
    const CameraIntrinsics k = synth::small_intrinsics(16, 16, 16.0);
    Gaussian g;
    g.mu = Vec3(0.0, 0.0, -2.0);
    g.opacity_logit = 3.0;
    CHECK_FALSE(project_gaussian(g, PoseSE3::identity(), k).has_value());
    g.mu.z() = 2.0;
    CHECK(project_gaussian(g, PoseSE3::identity(), k).has_value());
    g.mu.x() = 100.0;
    g.log_scale = Vec3::Constant(std::log(0.01));
    CHECK_FALSE(project_gaussian(g, PoseSE3::identity(), k).has_value());
}

TEST_CASE("projection of an isotropic Gaussian") {
    const CameraIntrinsics k = synth::small_intrinsics(32, 32, 20.0);
    Gaussian g;
    g.mu = Vec3(0.0, 0.0, 4.0);
    g.log_scale = Vec3::Constant(std::log(0.2));
    const auto p = project_gaussian(g, PoseSE3::identity(), k);
    REQUIRE(p.has_value());
    CHECK(p->mean2d.x() == doctest::Approx(k.cx));
    CHECK(p->depth == doctest::Approx(4.0));
    CHECK(p->cov2d(0, 0) == doctest::Approx(1.0 + 0.3));
    CHECK(p->cov2d(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("render is deterministic") {
    std::mt19937_64 rng(13);
    const CameraIntrinsics k = synth::small_intrinsics(48, 40, 40.0);
    const GaussianScene scene = synth::random_view_scene(rng, 200, 3, k, 2.0, 6.0, -3.0, -1.5);
    const RenderOutput a = render(scene, PoseSE3::identity(), k, Vec3::Zero());
    const RenderOutput b = render(scene, PoseSE3::identity(), k, Vec3::Zero());
    CHECK(a.color.data == b.color.data);
    RenderCotangents cot;
    cot.color = Image(k.width, k.height, 3, 1.0);
    const RenderGrads ga = render_backward(scene, PoseSE3::identity(), k, Vec3::Zero(), cot);
    const RenderGrads gb = render_backward(scene, PoseSE3::identity(), k, Vec3::Zero(), cot);
    CHECK(ga.mu == gb.mu);
    CHECK(ga.pose == gb.pose);
}

TEST_CASE("non-finite parameters are reported with their index") {
    const CameraIntrinsics k = synth::small_intrinsics(8, 8, 8.0);
    GaussianScene scene;
    scene.push_back(Gaussian{});
    Gaussian bad;
    bad.mu = Vec3(0.0, std::nan(""), 2.0);
    scene.push_back(bad);
    try {
        render(scene, PoseSE3::identity(), k, Vec3::Zero());
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(e.index() == 1);
    }
}

TEST_CASE("backward matches finite differences, SH degree 0") {
    std::mt19937_64 rng(14);
    const CameraIntrinsics k = synth::small_intrinsics(32, 32, 30.0);
    const GaussianScene scene = synth::random_view_scene(rng, 50, 0, k, 2.0, 5.0, std::log(0.1), std::log(0.4));
    const PoseSE3 w2c = se3_exp((Vec6() << 0.02, -0.03, 0.01, 0.05, 0.02, -0.1).finished());
    const auto r = synth::check_render_gradients(scene, w2c, k, Vec3(0.1, 0.3, 0.2), 1e-4, 1e-3, 1e-6, 0.7, 0.2);
    MESSAGE("considered " << r.considered << " passed " << r.passed);
    CHECK(r.pass_fraction() >= 0.95);
}

TEST_CASE("backward matches finite differences, SH degree 3") {
    std::mt19937_64 rng(15);
    const CameraIntrinsics k = synth::small_intrinsics(24, 24, 24.0);
    const GaussianScene scene = synth::random_view_scene(rng, 20, 3, k, 2.0, 5.0, std::log(0.1), std::log(0.4));
    const PoseSE3 w2c = se3_exp((Vec6() << -0.05, 0.02, 0.03, -0.1, 0.05, 0.1).finished());
    const auto r = synth::check_render_gradients(scene, w2c, k, Vec3::Zero(), 1e-4, 1e-3, 1e-6);
    MESSAGE("considered " << r.considered << " passed " << r.passed);
    CHECK(r.pass_fraction() >= 0.95);
}

TEST_CASE("identity cotangent can be kept off the geometry") {
    std::mt19937_64 rng(16);
    const CameraIntrinsics k = synth::small_intrinsics(24, 24, 24.0);
    const GaussianScene scene = synth::random_view_scene(rng, 20, 0, k, 2.0, 5.0, std::log(0.1), std::log(0.4));
    RenderCotangents cot;
    cot.identity = Image(k.width, k.height, 2, 1.0);
    BackwardOptions opt;
    opt.identity_drives_geometry = false;
    const RenderGrads g = render_backward(scene, PoseSE3::identity(), k, Vec3::Zero(), cot, opt);
    const RenderGrads full = render_backward(scene, PoseSE3::identity(), k, Vec3::Zero(), cot);
    double geometry = 0.0, m = 0.0, full_geometry = 0.0;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        geometry += g.mu[i].norm() + g.log_scale[i].norm() + std::abs(g.opacity_logit[i]);
        full_geometry += full.mu[i].norm();
        m += g.m[i].norm();
        CHECK((g.m[i] - full.m[i]).norm() < 1e-12);
    }
    CHECK(geometry == 0.0);
    CHECK(g.pose.norm() == 0.0);
    CHECK(m > 0.0);
    CHECK(full_geometry > 0.0);
}

TEST_CASE("view-space gradient statistics accumulate a running mean") {
    GaussianScene scene;
    scene.push_back(Gaussian{});
    scene.push_back(Gaussian{});
    const CameraIntrinsics k = synth::small_intrinsics(20, 10, 10.0);
    accumulate_view_space_gradients(scene, {Vec2(0.1, 0.0), Vec2(1.0, 1.0)}, {1, 0}, k);
    accumulate_view_space_gradients(scene, {Vec2(0.0, 0.3), Vec2(1.0, 1.0)}, {1, 0}, k);
    CHECK(scene.denom[0] == 2);
    CHECK(scene.denom[1] == 0);
    // NDC conversion scales x by W/2 and y by H/2.
    CHECK(scene.grad_accum[0] == doctest::Approx((0.1 * 10.0 + 0.3 * 5.0) / 2.0));
}

}
