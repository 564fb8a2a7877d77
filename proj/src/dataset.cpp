// SPDX-License-Identifier: Apache-2.0
#include "keasplat/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "keasplat/image_io.hpp"

namespace keasplat {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json pose_json(const PoseSE3& p) {
    const Mat4 m = p.matrix();
    json rows = json::array();
    for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
    return rows;
}

PoseSE3 parse_pose(const json& j, int index) {
    Mat4 m;
    if (!j.is_array() || j.size() != 4) throw ValidationError(fmt::format("manifest: frame {} pose must be 4x4", index));
    for (int r = 0; r < 4; ++r) {
        if (!j[r].is_array() || j[r].size() != 4)
            throw ValidationError(fmt::format("manifest: frame {} pose must be 4x4", index));
        for (int c = 0; c < 4; ++c) m(r, c) = j[r][c].get<double>();
    }
    const Mat3 r = m.topLeftCorner<3, 3>();
    if (!m.allFinite() || (r.transpose() * r - Mat3::Identity()).norm() > 1e-6 || r.determinant() < 0.0)
        throw ValidationError(fmt::format("manifest: frame {} pose is not a rigid transform", index));
    return PoseSE3::from_matrix(m);
}

} // namespace

std::string frame_file_stem(int index) { return fmt::format("{:05d}", index); }

Dataset load_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw ValidationError("load_dataset: missing " + manifest_path.string());

    Dataset ds;
    ds.root = dir;
    try {
        const json j = json::parse(in);
        ds.name = j.value("name", std::string());
        ds.source = j.value("source", std::string());
        const json& k = j.at("intrinsics");
        ds.intrinsics.fx = k.at("fx").get<double>();
        ds.intrinsics.fy = k.at("fy").get<double>();
        ds.intrinsics.cx = k.at("cx").get<double>();
        ds.intrinsics.cy = k.at("cy").get<double>();
        ds.intrinsics.width = k.at("width").get<int>();
        ds.intrinsics.height = k.at("height").get<int>();
        ds.intrinsics.validate();

        struct Entry {
            int index;
            json spec;
        };
        std::vector<Entry> entries;
        std::set<int> seen;
        for (const json& f : j.at("frames")) {
            const int index = f.at("index").get<int>();
            if (index < 0 || !seen.insert(index).second)
                throw ValidationError(fmt::format("manifest: bad or duplicate frame index {}", index));
            entries.push_back({index, f});
        }
        if (entries.empty()) throw ValidationError("manifest: no frames");
        std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.index < b.index; });

        const auto& K = ds.intrinsics;
        for (const Entry& e : entries) {
            const std::string stem = frame_file_stem(e.index);
            auto file = [&](const char* key, const fs::path& fallback) {
                return e.spec.contains(key) ? dir / e.spec[key].get<std::string>() : dir / fallback;
            };
            Frame fr;
            fr.index = e.index;
            const fs::path image_path = file("image", fs::path("images") / (stem + ".png"));
            if (!fs::exists(image_path)) throw ValidationError("load_dataset: missing " + image_path.string());
            fr.image = read_png_rgb(image_path);
            if (fr.image.width != K.width || fr.image.height != K.height)
                throw ValidationError(fmt::format("load_dataset: frame {} is {}x{}, intrinsics say {}x{}", e.index,
                                                  fr.image.width, fr.image.height, K.width, K.height));
            const fs::path mask_path = file("mask", fs::path("masks") / (stem + ".png"));
            fr.mask = fs::exists(mask_path) ? read_png_mask(mask_path) : Mask(K.width, K.height);
            const fs::path depth_path = file("depth", fs::path("depth") / (stem + ".pfm"));
            if (fs::exists(depth_path)) fr.depth = read_pfm(depth_path);
            fr.validate();
            ds.frames.push_back(std::move(fr));
            ds.poses.push_back(e.spec.contains("pose") ? std::optional(parse_pose(e.spec["pose"], e.index))
                                                       : std::nullopt);
        }
    } catch (const json::exception& e) {
        throw ValidationError(manifest_path.string() + ": " + e.what());
    }
    return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
    ds.intrinsics.validate();
    fs::create_directories(dir / "images");
    json frames = json::array();
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
        const Frame& f = ds.frames[i];
        const std::string stem = frame_file_stem(f.index);
        write_png(dir / "images" / (stem + ".png"), f.image);
        if (f.mask.count() > 0) {
            fs::create_directories(dir / "masks");
            write_png(dir / "masks" / (stem + ".png"), f.mask);
        }
        if (f.depth) {
            fs::create_directories(dir / "depth");
            write_pfm(dir / "depth" / (stem + ".pfm"), *f.depth);
        }
        json entry = {{"index", f.index}};
        if (i < ds.poses.size() && ds.poses[i]) entry["pose"] = pose_json(*ds.poses[i]);
        frames.push_back(entry);
    }
    const auto& k = ds.intrinsics;
    const json j = {{"name", ds.name},
                    {"source", ds.source},
                    {"intrinsics",
                     {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}}},
                    {"frames", frames}};
    std::ofstream out(dir / "manifest.json");
    if (!out) throw ValidationError("save_dataset: cannot write manifest in " + dir.string());
    out << j.dump(2) << '\n';
}

} // namespace keasplat
