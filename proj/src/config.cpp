// SPDX-License-Identifier: Apache-2.0
#include "keasplat/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include <toml.hpp>

namespace keasplat {

namespace {

using Setter = std::function<void(const toml::node&, const std::string&)>;
using Table = std::map<std::string, Setter>;

double as_double(const toml::node& n, const std::string& key) {
    if (auto v = n.value<double>()) return *v;
    throw ValidationError("config: '" + key + "' must be a number");
}

std::int64_t as_int(const toml::node& n, const std::string& key) {
    if (n.is_integer()) return *n.value<std::int64_t>();
    throw ValidationError("config: '" + key + "' must be an integer");
}

bool as_bool(const toml::node& n, const std::string& key) {
    if (n.is_boolean()) return *n.value<bool>();
    throw ValidationError("config: '" + key + "' must be a boolean");
}

Setter num(double& dst) {
    return [&dst](const toml::node& n, const std::string& k) { dst = as_double(n, k); };
}

template <typename I>
Setter integer(I& dst) {
    return [&dst](const toml::node& n, const std::string& k) {
        const std::int64_t v = as_int(n, k);
        if constexpr (std::is_unsigned_v<I>)
            if (v < 0) throw ValidationError("config: '" + k + "' must be non-negative");
        dst = static_cast<I>(v);
    };
}

Setter flag(bool& dst) {
    return [&dst](const toml::node& n, const std::string& k) { dst = as_bool(n, k); };
}

Setter vec3(Vec3& dst) {
    return [&dst](const toml::node& n, const std::string& k) {
        const toml::array* a = n.as_array();
        if (!a || a->size() != 3) throw ValidationError("config: '" + k + "' must be an array of 3 numbers");
        for (std::size_t i = 0; i < 3; ++i) dst[static_cast<int>(i)] = as_double(*a->get(i), k);
    };
}

void apply(const toml::table& tbl, const Table& fields, const std::string& prefix,
           const std::map<std::string, const Table*>& subtables = {}) {
    for (const auto& [key_view, node] : tbl) {
        const std::string key(key_view.str());
        const std::string full = prefix.empty() ? key : prefix + "." + key;
        if (const auto sub = subtables.find(key); sub != subtables.end()) {
            const toml::table* t = node.as_table();
            if (!t) throw ValidationError("config: '" + full + "' must be a table");
            apply(*t, *sub->second, full);
            continue;
        }
        const auto it = fields.find(key);
        if (it == fields.end()) throw ValidationError("config: unknown key '" + full + "'");
        it->second(node, full);
    }
}

} // namespace

AppConfig parse_config(std::string_view toml_text, std::string_view source) {
    toml::table root;
    try {
        root = toml::parse(toml_text, source);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "config: " << e.description() << " (" << e.source().begin << ")";
        throw ValidationError(msg.str());
    }

    AppConfig cfg;
    ExpansionConfig& x = cfg.expansion;
    LossWeights& w = x.loss_weights;
    PoseEstimateConfig& p = x.pose_cfg;
    LearningRates& lr = x.lr;
    BlendConfig& b = cfg.blend;
    SyntheticDenoiserConfig& d = cfg.denoiser;

    const Table top = {
        {"iters_per_frame", integer(x.iters_per_frame)},
        {"init_iters", integer(x.init_iters)},
        {"densify_grad_threshold", num(x.densify_grad_threshold)},
        {"densify_interval", integer(x.densify_interval)},
        {"prune_opacity_threshold", num(x.prune_opacity_threshold)},
        {"max_points", integer(x.max_points)},
        {"init_stride", integer(x.init_stride)},
        {"sh_degree", integer(x.sh_degree)},
        {"jsd_samples", integer(x.jsd_samples)},
        {"jsd_neighbors", integer(x.jsd_neighbors)},
        {"anchor_maturity", num(x.anchor_maturity)},
        {"two_frame_window", flag(x.two_frame_window)},
        {"seed", integer(x.seed)},
        {"background", vec3(x.background)},
    };
    const Table loss = {
        {"gamma", num(w.gamma)},           {"lambda_bce", num(w.lambda_bce)}, {"lambda_jsd", num(w.lambda_jsd)},
        {"lambda_rgb", num(w.lambda_rgb)}, {"lambda_kea", num(w.lambda_kea)}, {"lambda_ipc", num(w.lambda_ipc)},
        {"lambda_pc", num(w.lambda_pc)},
    };
    const Table pose = {
        {"max_iters", integer(p.max_iters)},
        {"lr_rot", num(p.lr_rot)},
        {"lr_trans", num(p.lr_trans)},
        {"convergence_tol", num(p.convergence_tol)},
        {"convergence_window", integer(p.convergence_window)},
        {"lr_final_scale", num(p.lr_final_scale)},
        {"gamma", num(p.gamma)},
        {"mask_kea", flag(p.mask_kea)},
        {"probe_step", num(p.probe_step)},
        {"min_curvature", num(p.min_curvature)},
    };
    const Table rates = {
        {"position", num(lr.position)}, {"sh_dc", num(lr.sh_dc)},       {"sh_rest", num(lr.sh_rest)},
        {"opacity", num(lr.opacity)},   {"scale", num(lr.scale)},       {"rotation", num(lr.rotation)},
        {"kea", num(lr.kea)},           {"pose_refine", num(lr.pose_refine)},
    };
    const Table blend = {
        {"window", integer(b.window)}, {"lambda_d", num(b.lambda_d)}, {"gamma_f", num(b.gamma_f)},
        {"gamma_E", num(b.gamma_E)},   {"s_f", num(b.s_f)},           {"s_T", num(b.s_T)},
        {"steps", integer(b.steps)},   {"seed", integer(b.seed)},     {"init_noise", num(b.init_noise)},
    };
    const Table denoiser = {{"a", num(d.a)}, {"b", num(d.b)}, {"c", num(d.c)}};

    apply(root, top, "",
          {{"loss_weights", &loss}, {"pose_cfg", &pose}, {"lr", &rates}, {"blend", &blend},
           {"synthetic_denoiser", &denoiser}});
    cfg.expansion.validate();
    cfg.blend.validate();
    return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

} // namespace keasplat
