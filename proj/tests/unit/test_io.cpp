// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <string>

#include "keasplat/config.hpp"
#include "keasplat/dataset.hpp"
#include "keasplat/image_io.hpp"
#include "keasplat/metrics.hpp"
#include "keasplat/ply.hpp"
#include "keasplat/se3.hpp"
#include "stock_ply.hpp"
#include "synthetic.hpp"

using namespace keasplat;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("keasplat_unit_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }

/// Random scene whose every parameter is exactly representable in float32.
GaussianScene float_scene(std::uint64_t seed, int n, int degree) {
    std::mt19937_64 rng(seed);
    GaussianScene s;
    for (int i = 0; i < n; ++i) {
        Gaussian g = synth::random_gaussian(rng, degree, Vec3(-2, -2, 1), Vec3(2, 2, 6), -4.0, -1.0);
        for (int j = 0; j < 3; ++j) g.mu[j] = as_float(g.mu[j]), g.log_scale[j] = as_float(g.log_scale[j]);
        for (int j = 0; j < 4; ++j) g.rot[j] = as_float(g.rot[j]);
        for (Eigen::Index j = 0; j < g.sh.size(); ++j) g.sh[j] = as_float(g.sh[j]);
        g.m = Vec2(as_float(g.m[0]), as_float(g.m[1]));
        g.opacity_logit = as_float(g.opacity_logit);
        g.created_at = 7 * i;
        s.push_back(std::move(g));
    }
    return s;
}

std::vector<PoseSE3> random_trajectory(std::uint64_t seed, int n) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 0.3);
    std::vector<PoseSE3> t{PoseSE3()};
    for (int i = 1; i < n; ++i) {
        Vec6 xi;
        for (int j = 0; j < 6; ++j) xi[j] = nd(rng);
        t.push_back(PoseSE3::from_tangent(xi));
    }
    return t;
}

void check_same_scene(const GaussianScene& a, const GaussianScene& b) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Gaussian &x = a.gaussians[i], &y = b.gaussians[i];
        CHECK(x.mu == y.mu);
        CHECK(x.log_scale == y.log_scale);
        CHECK(x.rot == y.rot);
        CHECK(x.opacity_logit == y.opacity_logit);
        CHECK(x.sh == y.sh);
        CHECK(x.m == y.m);
        CHECK(x.created_at == y.created_at);
    }
}

} // namespace

TEST_SUITE("io") {

TEST_CASE("PNG round trip of 8-bit levels is exact") {
    const fs::path dir = scratch_dir("png");
    std::mt19937_64 rng(61);
    std::uniform_int_distribution<int> level(0, 255);
    Image img(9, 7, 3);
    for (double& v : img.data) v = level(rng) / 255.0;
    write_png(dir / "a.png", img);
    const Image back = read_png_rgb(dir / "a.png");
    CHECK(back.same_shape(img));
    CHECK(back.data == img.data);

    Image gray(5, 4, 1);
    for (double& v : gray.data) v = level(rng) / 255.0;
    write_png(dir / "g.png", gray);
    const Image rgb = read_png_rgb(dir / "g.png");
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x)
            for (int c = 0; c < 3; ++c) CHECK(rgb.at(x, y, c) == gray.at(x, y, 0));

    Mask m(6, 3);
    m.at(1, 1) = m.at(5, 2) = 1;
    write_png(dir / "m.png", m);
    CHECK(read_png_mask(dir / "m.png").data == m.data);
    CHECK_THROWS_AS(read_png_rgb(dir / "missing.png"), ValidationError);
}

TEST_CASE("quantize8 rounds to the nearest level and clamps") {
    Image img(3, 1, 1);
    img.data = {-0.2, 0.5 / 255.0 + 1e-9, 1.7};
    const Image q = quantize8(img);
    CHECK(q.data[0] == 0.0);
    CHECK(q.data[1] == 1.0 / 255.0);
    CHECK(q.data[2] == 1.0);
}

TEST_CASE("PFM round trip is bit exact for float values") {
    const fs::path dir = scratch_dir("pfm");
    std::mt19937_64 rng(62);
    std::uniform_real_distribution<double> u(0.1, 40.0);
    Image depth(11, 6, 1);
    for (double& v : depth.data) v = as_float(u(rng));
    write_pfm(dir / "d.pfm", depth);
    const Image back = read_pfm(dir / "d.pfm");
    CHECK(back.same_shape(depth));
    CHECK(back.data == depth.data);
    write_pfm(dir / "e.pfm", back);
    CHECK(slurp(dir / "d.pfm") == slurp(dir / "e.pfm"));
}

TEST_CASE("PFM reads big-endian files bottom row first") {
    const fs::path dir = scratch_dir("pfm_be");
    {
        std::ofstream out(dir / "be.pfm", std::ios::binary);
        out << "Pf\n2 2\n1.0\n";
        for (float v : {3.0f, 4.0f, 1.0f, 2.0f}) {
            char b[4];
            std::memcpy(b, &v, 4);
            for (int i = 3; i >= 0; --i) out.put(b[i]);
        }
    }
    const Image d = read_pfm(dir / "be.pfm");
    CHECK(d.at(0, 0, 0) == 1.0);
    CHECK(d.at(1, 0, 0) == 2.0);
    CHECK(d.at(0, 1, 0) == 3.0);
    CHECK(d.at(1, 1, 0) == 4.0);
}

TEST_CASE("PFM rejects color files and non-finite values") {
    const fs::path dir = scratch_dir("pfm_bad");
    {
        std::ofstream out(dir / "color.pfm", std::ios::binary);
        out << "PF\n1 1\n-1.0\n";
        const float v[3] = {1, 2, 3};
        out.write(reinterpret_cast<const char*>(v), sizeof v);
    }
    CHECK_THROWS_AS(read_pfm(dir / "color.pfm"), ValidationError);
    {
        std::ofstream out(dir / "nan.pfm", std::ios::binary);
        out << "Pf\n1 1\n-1.0\n";
        const float v = std::numeric_limits<float>::quiet_NaN();
        out.write(reinterpret_cast<const char*>(&v), 4);
    }
    CHECK_THROWS_AS(read_pfm(dir / "nan.pfm"), ValidationError);
}

TEST_CASE("PLY round trip is bit exact") {
    const fs::path dir = scratch_dir("ply");
    for (int degree : {0, 1, 3}) {
        const GaussianScene scene = float_scene(63 + degree, 40, degree);
        const auto traj = random_trajectory(64, 5);
        const CameraIntrinsics k = synth::small_intrinsics(32, 24, 30.0);
        save_scene(dir / "s.ply", scene, traj, k);
        const LoadedScene back = load_scene(dir / "s.ply");
        CHECK_FALSE(back.kea_defaulted);
        check_same_scene(scene, back.scene);
        REQUIRE(back.trajectory.size() == traj.size());
        for (std::size_t i = 0; i < traj.size(); ++i) CHECK(back.trajectory[i].matrix() == traj[i].matrix());
        REQUIRE(back.intrinsics);
        CHECK(back.intrinsics->fx == k.fx);
        CHECK(back.intrinsics->cx == k.cx);
        CHECK(back.intrinsics->width == k.width);

        save_scene(dir / "t.ply", back.scene, back.trajectory, back.intrinsics);
        CHECK(slurp(dir / "s.ply") == slurp(dir / "t.ply"));
        CHECK(slurp(trajectory_path(dir / "s.ply")) == slurp(trajectory_path(dir / "t.ply")));
    }
}

TEST_CASE("stock 3DGS PLY loads with defaulted identity logits") {
    const fs::path dir = scratch_dir("stock");
    GaussianScene scene = float_scene(65, 25, 3);
    synth::write_stock_3dgs_ply(dir / "stock.ply", scene);
    const LoadedScene back = load_scene(dir / "stock.ply");
    CHECK(back.kea_defaulted);
    CHECK(back.trajectory.empty());
    CHECK_FALSE(back.intrinsics);
    for (auto& g : scene.gaussians) g.m = Vec2::Zero(), g.created_at = 0;
    check_same_scene(scene, back.scene);
}

TEST_CASE("malformed PLY files are rejected") {
    const fs::path dir = scratch_dir("ply_bad");
    {
        std::ofstream out(dir / "ascii.ply");
        out << "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nend_header\n";
    }
    CHECK_THROWS_AS(load_scene(dir / "ascii.ply"), ValidationError);
    save_scene(dir / "ok.ply", float_scene(66, 3, 0), {});
    std::string bytes = slurp(dir / "ok.ply");
    bytes.resize(bytes.size() - 5);
    {
        std::ofstream out(dir / "short.ply", std::ios::binary);
        out << bytes;
    }
    CHECK_THROWS_AS(load_scene(dir / "short.ply"), ValidationError);
    CHECK_THROWS_AS(load_scene(dir / "nothing.ply"), ValidationError);
}

TEST_CASE("pose matrices load from bare and wrapped JSON") {
    const fs::path dir = scratch_dir("pose");
    {
        std::ofstream(dir / "bare.json") << "[[1,0,0,1],[0,1,0,2],[0,0,1,3],[0,0,0,1]]";
        std::ofstream(dir / "wrapped.json") << R"({"pose": [[0,-1,0,0],[1,0,0,0],[0,0,1,0],[0,0,0,1]]})";
        std::ofstream(dir / "scaled.json") << "[[2,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]";
    }
    CHECK(load_pose_matrix(dir / "bare.json").translation() == Vec3(1, 2, 3));
    CHECK(load_pose_matrix(dir / "wrapped.json").rotation()(1, 0) == 1.0);
    CHECK_THROWS_AS(load_pose_matrix(dir / "scaled.json"), ValidationError);
}

TEST_CASE("dataset save and load round trip") {
    const fs::path dir = scratch_dir("dataset");
    synth::OrbitSpec spec;
    spec.width = 24;
    spec.height = 18;
    spec.focal = 22.0;
    spec.frames = 3;
    const synth::OrbitScene scene = synth::make_orbit_scene(spec);
    Dataset ds = synth::make_orbit_dataset(scene);
    for (auto& f : ds.frames) f.image = quantize8(f.image);
    for (auto& f : ds.frames)
        if (f.depth)
            for (double& v : f.depth->data) v = as_float(v);
    save_dataset(ds, dir);
    const Dataset back = load_dataset(dir);
    CHECK(back.name == ds.name);
    CHECK(back.intrinsics.fx == ds.intrinsics.fx);
    REQUIRE(back.frames.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.frames[i].index == ds.frames[i].index);
        CHECK(back.frames[i].image.data == ds.frames[i].image.data);
        CHECK(back.frames[i].mask.data == ds.frames[i].mask.data);
        CHECK(back.frames[i].depth.has_value() == ds.frames[i].depth.has_value());
        REQUIRE(back.poses[i]);
        CHECK((back.poses[i]->matrix() - ds.poses[i]->matrix()).cwiseAbs().maxCoeff() < 1e-15);
    }
    CHECK(back.frames[0].depth->data == ds.frames[0].depth->data);
    CHECK_THROWS_AS(load_dataset(dir / "absent"), ValidationError);
}

TEST_CASE("frame stems are zero padded") {
    CHECK(frame_file_stem(0) == "00000");
    CHECK(frame_file_stem(42) == "00042");
}

}

TEST_SUITE("config") {

TEST_CASE("empty config gives defaults") {
    const AppConfig c = parse_config("");
    CHECK(c.expansion.iters_per_frame == ExpansionConfig{}.iters_per_frame);
    CHECK(c.blend.window == BlendConfig{}.window);
    CHECK(c.denoiser.a == -0.5);
}

TEST_CASE("keys and tables are applied") {
    const AppConfig c = parse_config(R"(
iters_per_frame = 30
densify_grad_threshold = 1e-3
two_frame_window = true
background = [1.0, 0.5, 0]
[loss_weights]
lambda_ipc = 0.0
[pose_cfg]
lr_rot = 5e-3
mask_kea = true
[lr]
pose_refine = 3e-4
[blend]
window = 4
gamma_E = 0.25
[synthetic_denoiser]
c = 0.7
)");
    CHECK(c.expansion.iters_per_frame == 30);
    CHECK(c.expansion.densify_grad_threshold == 1e-3);
    CHECK(c.expansion.two_frame_window);
    CHECK(c.expansion.background == Vec3(1.0, 0.5, 0.0));
    CHECK(c.expansion.loss_weights.lambda_ipc == 0.0);
    CHECK(c.expansion.pose_cfg.lr_rot == 5e-3);
    CHECK(c.expansion.pose_cfg.mask_kea);
    CHECK(c.expansion.lr.pose_refine == 3e-4);
    CHECK(c.blend.window == 4);
    CHECK(c.blend.gamma_E == 0.25);
    CHECK(c.denoiser.c == 0.7);
}

TEST_CASE("bad configs are validation errors") {
    CHECK_THROWS_AS(parse_config("no_such_key = 1"), ValidationError);
    CHECK_THROWS_AS(parse_config("[pose_cfg]\nlr_typo = 1"), ValidationError);
    CHECK_THROWS_AS(parse_config("iters_per_frame = \"ten\""), ValidationError);
    CHECK_THROWS_AS(parse_config("iters_per_frame = 1.5"), ValidationError);
    CHECK_THROWS_AS(parse_config("background = [1, 2]"), ValidationError);
    CHECK_THROWS_AS(parse_config("pose_cfg = 3"), ValidationError);
    CHECK_THROWS_AS(parse_config("iters_per_frame = "), ValidationError);
    CHECK_THROWS_AS(load_config("/nonexistent/keasplat.toml"), ValidationError);
}

}

TEST_SUITE("metrics") {

TEST_CASE("PSNR matches its definition") {
    Image a(4, 4, 3, 0.5), b(4, 4, 3, 0.5);
    CHECK(psnr(a, b) == kPsnrCap);
    b.data[0] += 0.1;
    const double mse = 0.01 / static_cast<double>(a.data.size());
    CHECK(psnr(a, b) == doctest::Approx(-10.0 * std::log10(mse)).epsilon(1e-12));
    Image c(4, 4, 3, 0.0), d(4, 4, 3, 1.0);
    CHECK(psnr(c, d) == doctest::Approx(0.0));
    CHECK_THROWS_AS(psnr(a, Image(3, 4, 3)), ValidationError);
}

TEST_CASE("E-PSNR averages per-view PSNR") {
    Image a(2, 2, 3, 0.2), b(2, 2, 3, 0.3), c(2, 2, 3, 0.2);
    const double expect = (psnr(a, b) + kPsnrCap) / 2.0;
    CHECK(e_psnr({a, a}, {b, c}) == doctest::Approx(expect));
    CHECK_THROWS_AS(e_psnr({}, {}), ValidationError);
    CHECK_THROWS_AS(e_psnr({a}, {a, b}), ValidationError);
}

}
