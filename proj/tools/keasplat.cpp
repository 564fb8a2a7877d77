// SPDX-License-Identifier: Apache-2.0
// keasplat command-line front end.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "keasplat/blend.hpp"
#include "keasplat/config.hpp"
#include "keasplat/dataset.hpp"
#include "keasplat/expansion.hpp"
#include "keasplat/image_io.hpp"
#include "keasplat/kmedoids.hpp"
#include "keasplat/metrics.hpp"
#include "keasplat/ply.hpp"
#include "keasplat/rasterizer.hpp"
#include "keasplat/ssim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace keasplat;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

AppConfig config_from(const std::string& path) { return path.empty() ? AppConfig{} : load_config(path); }

Vec3 parse_background(const std::string& s) {
    Vec3 bg;
    char c1 = 0, c2 = 0;
    std::istringstream in(s);
    if (!(in >> bg[0] >> c1 >> bg[1] >> c2 >> bg[2]) || c1 != ',' || c2 != ',')
        throw ValidationError("--background expects r,g,b");
    return bg;
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

// --- reconstruct -------------------------------------------------------------

struct ReconstructArgs {
    std::string data, out, config, ablate;
    std::optional<std::uint64_t> seed;
    bool pose_mask_kea = false;
    bool quiet = false;
};

void write_loss_csv(const fs::path& path, const std::vector<StepRecord>& history) {
    std::ofstream csv(path);
    if (!csv) throw ValidationError("cannot write " + path.string());
    csv << "step,frame,rgb,bce,jsd,ipc,pc,total\n";
    for (const auto& r : history) {
        const auto& c = r.components;
        csv << fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.step, r.frame, c.rgb, c.bce, c.jsd,
                           c.ipc, c.pc, r.total);
    }
}

int run_reconstruct(const ReconstructArgs& a) {
    AppConfig app = config_from(a.config);
    ExpansionConfig& cfg = app.expansion;
    if (a.seed) cfg.seed = *a.seed;
    if (a.pose_mask_kea) cfg.pose_cfg.mask_kea = true;
    std::stringstream parts(a.ablate);
    for (std::string item; std::getline(parts, item, ',');) {
        if (item == "kea") cfg.loss_weights.lambda_kea = 0.0;
        else if (item == "ipc") cfg.loss_weights.lambda_ipc = 0.0;
        else if (item == "pc") cfg.loss_weights.lambda_pc = 0.0;
        else if (!item.empty()) throw ValidationError("--ablate: unknown loss '" + item + "' (kea, ipc, pc)");
    }
    cfg.validate();

    const Dataset ds = load_dataset(a.data);
    const fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    const fs::path csv_path = out.parent_path() / "loss_history.csv";

    int last_frame = -1;
    auto on_step = [&](const StepRecord& r) {
        if (!a.quiet && r.frame != last_frame && r.frame > last_frame) {
            spdlog::info("step {} frame {} total {:.5f}", r.step, r.frame, r.total);
            last_frame = r.frame;
        }
    };
    try {
        const ReconstructionResult res = expand_scene(ds.frames, ds.intrinsics, cfg, on_step);
        save_scene(out, res.scene, res.trajectory, ds.intrinsics);
        write_loss_csv(csv_path, res.loss_history);
        std::size_t low = 0;
        for (const auto& e : res.pose_estimates) low += e.low_confidence;
        if (low) spdlog::warn("{} pose estimate(s) flagged low-confidence", low);
        if (!a.quiet)
            spdlog::info("wrote {} ({} Gaussians, {} poses)", out.string(), res.scene.size(), res.trajectory.size());
    } catch (const ReconstructionFailure& f) {
        save_scene(out, f.partial().scene, f.partial().trajectory, ds.intrinsics);
        write_loss_csv(csv_path, f.partial().loss_history);
        throw;
    }
    return 0;
}

// --- render --------------------------------------------------------------------

struct RenderArgs {
    std::string scene, pose, out, channel = "color", background = "0,0,0";
    int pose_index = -1;
};

int run_render(const RenderArgs& a) {
    const LoadedScene s = load_scene(a.scene);
    if (!s.intrinsics) throw ValidationError("render: scene has no intrinsics in its trajectory sidecar");
    PoseSE3 cam_to_world;
    if (!a.pose.empty()) {
        cam_to_world = load_pose_matrix(a.pose);
    } else {
        if (a.pose_index < 0 || a.pose_index >= static_cast<int>(s.trajectory.size()))
            throw ValidationError(fmt::format("render: pose index {} outside trajectory of {}", a.pose_index,
                                              s.trajectory.size()));
        cam_to_world = s.trajectory[a.pose_index];
    }
    const RenderOutput r = render(s.scene, cam_to_world.inverse(), *s.intrinsics, parse_background(a.background));
    const fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());

    if (a.channel == "color") {
        write_png(out, r.color);
    } else if (a.channel == "alpha") {
        write_png(out, r.alpha);
    } else if (a.channel == "identity") {
        Image p(r.identity.width, r.identity.height, 1);
        for (std::size_t i = 0; i < p.data.size(); ++i)
            p.data[i] = r.alpha.data[i] > 0.0 ? kea_probability(Vec2(r.identity.data[2 * i], r.identity.data[2 * i + 1]))
                                              : 0.0;
        write_png(out, p);
    } else if (a.channel == "depth") {
        if (out.extension() == ".pfm") {
            write_pfm(out, r.depth);
        } else {
            double max_depth = 0.0;
            for (double v : r.depth.data) max_depth = std::max(max_depth, v);
            Image d = r.depth;
            if (max_depth > 0.0)
                for (double& v : d.data) v /= max_depth;
            write_png(out, d);
        }
    } else {
        throw ValidationError("render: unknown channel '" + a.channel + "'");
    }
    return 0;
}

// --- metrics -------------------------------------------------------------------

struct MetricsArgs {
    std::string scene, data, out, reference, renders, pose_source = "trajectory", background = "0,0,0";
};

int run_metrics(const MetricsArgs& a) {
    const LoadedScene s = load_scene(a.scene);
    const Dataset ds = load_dataset(a.data);
    const CameraIntrinsics k = ds.intrinsics;
    const Vec3 bg = parse_background(a.background);
    std::optional<LoadedScene> ref;
    if (!a.reference.empty()) ref = load_scene(a.reference);
    if (!a.renders.empty()) fs::create_directories(a.renders);

    json views = json::array();
    std::vector<Image> edited, reference;
    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
        const Frame& f = ds.frames[i];
        PoseSE3 c2w;
        if (a.pose_source == "dataset") {
            if (!ds.poses[i]) throw ValidationError(fmt::format("metrics: frame {} has no pose", f.index));
            c2w = *ds.poses[i];
        } else if (a.pose_source == "trajectory") {
            if (i >= s.trajectory.size())
                throw ValidationError(fmt::format("metrics: trajectory has no pose for frame {}", f.index));
            c2w = s.trajectory[i];
        } else {
            throw ValidationError("metrics: --pose-source must be trajectory or dataset");
        }
        const Image img = quantize8(render(s.scene, c2w.inverse(), k, bg).color);
        if (!a.renders.empty()) write_png(fs::path(a.renders) / (frame_file_stem(f.index) + ".png"), img);
        const double p = psnr(img, f.image);
        const double q = ssim(img, f.image);
        psnr_sum += p;
        ssim_sum += q;
        views.push_back({{"index", f.index}, {"psnr", p}, {"ssim", q}});
        if (ref) {
            edited.push_back(img);
            reference.push_back(quantize8(render(ref->scene, c2w.inverse(), k, bg).color));
        }
    }
    const double n = static_cast<double>(ds.frames.size());
    json j = {{"views", views}, {"mean_psnr", psnr_sum / n}, {"mean_ssim", ssim_sum / n},
              {"gaussians", s.scene.size()}};
    if (ref) j["e_psnr"] = e_psnr(edited, reference);
    write_json(a.out, j);
    return 0;
}

// --- blend-demo ----------------------------------------------------------------

struct BlendArgs {
    std::string frames, config, out;
    bool synthetic = false;
};

int run_blend(const BlendArgs& a) {
    if (!a.synthetic) throw ValidationError("blend-demo: only --synthetic-denoiser is available");
    const AppConfig app = config_from(a.config);
    Dataset ds = load_dataset(a.frames);
    const SyntheticDenoiser denoiser(app.denoiser.a, app.denoiser.b, app.denoiser.c);
    const BlendResult res = autoregressive_edit(ds.frames, denoiser, app.blend, true);

    const fs::path out(a.out);
    ds.frames = res.edited;
    ds.source = "blend-demo";
    save_dataset(ds, out);
    std::ofstream csv(out / "blend_trace.csv");
    if (!csv) throw ValidationError("cannot write blend trace");
    csv << "frame,step,eps_tilde_mean,eps_bar_mean,eps_mean,latent_mean\n";
    for (const auto& t : res.trace)
        csv << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", t.frame, t.step, t.eps_tilde.mean(),
                           t.eps_bar.mean(), t.eps.mean(), t.latent.mean());
    return 0;
}

// --- sample-points -------------------------------------------------------------

struct SampleArgs {
    std::string mask, out;
    int k = 1;
    std::uint64_t seed = 0;
};

int run_sample(const SampleArgs& a) {
    const Mask m = read_png_mask(a.mask);
    json pts = json::array();
    for (const auto& p : sample_query_points(m, a.k, a.seed)) pts.push_back({p.x, p.y});
    write_json(a.out, {{"points", pts}});
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Editable Gaussian splatting from unposed frame sequences"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    ReconstructArgs ra;
    auto* rec = app.add_subcommand("reconstruct", "Reconstruct scene and trajectory from a dataset");
    rec->add_option("--data", ra.data, "Dataset directory")->required();
    rec->add_option("--out", ra.out, "Output PLY")->required();
    rec->add_option("--config", ra.config, "TOML config");
    rec->add_option("--seed", ra.seed, "Random seed");
    rec->add_flag("--pose-mask-kea", ra.pose_mask_kea, "Ignore KEA pixels during pose estimation");
    rec->add_option("--ablate", ra.ablate, "Comma-separated losses to disable: kea, ipc, pc");
    rec->add_flag("--quiet", ra.quiet, "Only report warnings and errors");

    RenderArgs rr;
    auto* ren = app.add_subcommand("render", "Render a saved scene");
    ren->add_option("--scene", rr.scene, "Scene PLY")->required();
    auto* idx = ren->add_option("--pose-index", rr.pose_index, "Trajectory index");
    auto* pose = ren->add_option("--pose", rr.pose, "JSON camera-to-world 4x4 matrix");
    idx->excludes(pose);
    ren->add_option("--out", rr.out, "Output image")->required();
    ren->add_option("--channel", rr.channel, "color, identity, alpha or depth");
    ren->add_option("--background", rr.background, "Background color r,g,b");

    MetricsArgs ma;
    auto* met = app.add_subcommand("metrics", "PSNR / SSIM of a scene against a dataset");
    met->add_option("--scene", ma.scene, "Scene PLY")->required();
    met->add_option("--data", ma.data, "Dataset directory")->required();
    met->add_option("--out", ma.out, "Output JSON")->required();
    met->add_option("--reference", ma.reference, "Reference scene PLY for E-PSNR");
    met->add_option("--renders", ma.renders, "Directory for the evaluated 8-bit renders");
    met->add_option("--pose-source", ma.pose_source,
                    "trajectory (scene poses by frame order) or dataset (manifest poses, frame-0 coordinates)");
    met->add_option("--background", ma.background, "Background color r,g,b");

    BlendArgs ba;
    auto* bl = app.add_subcommand("blend-demo", "Multi-view consistent editing with the synthetic denoiser");
    bl->add_option("--frames", ba.frames, "Dataset directory")->required();
    bl->add_flag("--synthetic-denoiser", ba.synthetic, "Use the built-in linear denoiser");
    bl->add_option("--config", ba.config, "TOML config");
    bl->add_option("--out", ba.out, "Output directory")->required();

    SampleArgs sa;
    auto* sp = app.add_subcommand("sample-points", "K-Medoids query points inside a mask");
    sp->add_option("--mask", sa.mask, "Mask PNG")->required();
    sp->add_option("-k", sa.k, "Number of points")->required();
    sp->add_option("--seed", sa.seed, "Random seed");
    sp->add_option("--out", sa.out, "Output JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        spdlog::set_level(spdlog::level::from_str(log_level));
        if (ra.quiet) spdlog::set_level(spdlog::level::warn);
        if (*rec) return run_reconstruct(ra);
        if (*ren) return run_render(rr);
        if (*met) return run_metrics(ma);
        if (*bl) return run_blend(ba);
        if (*sp) return run_sample(sa);
    } catch (const ValidationError& e) {
        spdlog::error("{}", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitRuntime;
    }
    return kExitRuntime;
}
