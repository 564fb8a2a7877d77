// SPDX-License-Identifier: Apache-2.0
#include "keasplat/ply.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace keasplat {

namespace {

using nlohmann::json;

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

struct Property {
    std::string name;
    PlyType type;
    std::size_t offset;
};

std::size_t type_size(PlyType t) {
    switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
    }
    return 0;
}

PlyType parse_type(const std::string& s) {
    static const std::map<std::string, PlyType> types = {
        {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
        {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
        {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
        {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
        {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
        {"float64", PlyType::Float64}};
    const auto it = types.find(s);
    if (it == types.end()) throw ValidationError("PLY: unsupported property type '" + s + "'");
    return it->second;
}

template <typename T>
T read_le(const std::uint8_t* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

double read_value(const std::uint8_t* p, PlyType t) {
    switch (t) {
    case PlyType::Int8: return read_le<std::int8_t>(p);
    case PlyType::UInt8: return read_le<std::uint8_t>(p);
    case PlyType::Int16: return read_le<std::int16_t>(p);
    case PlyType::UInt16: return read_le<std::uint16_t>(p);
    case PlyType::Int32: return read_le<std::int32_t>(p);
    case PlyType::UInt32: return read_le<std::uint32_t>(p);
    case PlyType::Float32: return read_le<float>(p);
    case PlyType::Float64: return read_le<double>(p);
    }
    return 0.0;
}

void append_float(std::string& buf, double v) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    char b[4];
    std::memcpy(b, &bits, 4);
    buf.append(b, 4);
}

json pose_to_json(const PoseSE3& p) {
    const Mat4 m = p.matrix();
    json rows = json::array();
    for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
    return rows;
}

PoseSE3 pose_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw ValidationError("pose: expected a 4x4 matrix");
    Mat4 m;
    for (int r = 0; r < 4; ++r) {
        if (!j[r].is_array() || j[r].size() != 4) throw ValidationError("pose: expected a 4x4 matrix");
        for (int c = 0; c < 4; ++c) m(r, c) = j[r][c].get<double>();
    }
    const Mat3 r = m.topLeftCorner<3, 3>();
    if (!m.allFinite() || (r.transpose() * r - Mat3::Identity()).norm() > 1e-6 || r.determinant() < 0.0 ||
        (m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).norm() > 1e-9)
        throw ValidationError("pose: matrix is not a rigid transform");
    return PoseSE3::from_matrix(m);
}

json intrinsics_to_json(const CameraIntrinsics& k) {
    return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

} // namespace

std::filesystem::path trajectory_path(const std::filesystem::path& ply_path) {
    std::filesystem::path p = ply_path;
    p.replace_extension(".trajectory.json");
    return p;
}

void save_trajectory(const std::filesystem::path& path, const std::vector<PoseSE3>& trajectory,
                     const std::optional<CameraIntrinsics>& intrinsics) {
    json j;
    j["convention"] = "camera_to_world";
    j["poses"] = json::array();
    for (const auto& p : trajectory) j["poses"].push_back(pose_to_json(p));
    if (intrinsics) j["intrinsics"] = intrinsics_to_json(*intrinsics);
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open " + path.string());
    out << j.dump(2) << '\n';
}

std::pair<std::vector<PoseSE3>, std::optional<CameraIntrinsics>> load_trajectory(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    if (j.value("convention", std::string("camera_to_world")) != "camera_to_world")
        throw ValidationError(path.string() + ": unsupported pose convention");
    std::pair<std::vector<PoseSE3>, std::optional<CameraIntrinsics>> out;
    try {
        for (const auto& p : j.at("poses")) out.first.push_back(pose_from_json(p));
        if (j.contains("intrinsics")) {
            const json& k = j["intrinsics"];
            CameraIntrinsics ki;
            ki.fx = k.at("fx").get<double>();
            ki.fy = k.at("fy").get<double>();
            ki.cx = k.at("cx").get<double>();
            ki.cy = k.at("cy").get<double>();
            ki.width = k.at("width").get<int>();
            ki.height = k.at("height").get<int>();
            ki.validate();
            out.second = ki;
        }
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return out;
}

PoseSE3 load_pose_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    try {
        const json j = json::parse(in);
        return pose_from_json(j.is_object() ? j.at("pose") : j);
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void save_scene(const std::filesystem::path& path, const GaussianScene& scene,
                const std::vector<PoseSE3>& trajectory, const std::optional<CameraIntrinsics>& intrinsics) {
    const int degree = scene.empty() ? 0 : scene.gaussians.front().sh_degree();
    const int rest = sh_coeff_count(degree) - 1;
    for (const auto& g : scene.gaussians)
        if (g.sh_degree() != degree) throw ValidationError("save_scene: mixed SH degrees");

    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\nelement vertex " << scene.size() << '\n';
    for (const char* n : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"})
        header << "property float " << n << '\n';
    for (int i = 0; i < 3 * rest; ++i) header << "property float f_rest_" << i << '\n';
    for (const char* n : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "kea_0",
                          "kea_1"})
        header << "property float " << n << '\n';
    header << "property int created_at\nend_header\n";

    std::string body;
    body.reserve(scene.size() * (4 * (20 + 3 * rest) + 4));
    for (const auto& g : scene.gaussians) {
        for (int i = 0; i < 3; ++i) append_float(body, g.mu[i]);
        for (int i = 0; i < 3; ++i) append_float(body, 0.0);
        for (int c = 0; c < 3; ++c) append_float(body, g.sh[c]);
        for (int c = 0; c < 3; ++c)
            for (int k = 1; k <= rest; ++k) append_float(body, g.sh[k * 3 + c]);
        append_float(body, g.opacity_logit);
        for (int i = 0; i < 3; ++i) append_float(body, g.log_scale[i]);
        for (int i = 0; i < 4; ++i) append_float(body, g.rot[i]);
        for (int i = 0; i < 2; ++i) append_float(body, g.m[i]);
        const auto created = static_cast<std::int32_t>(g.created_at);
        char b[4];
        std::memcpy(b, &created, 4);
        body.append(b, 4);
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open " + path.string());
    out << header.str();
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw std::runtime_error("save_scene: failed writing " + path.string());
    save_trajectory(trajectory_path(path), trajectory, intrinsics);
}

LoadedScene load_scene(const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little, "PLY reader assumes a little-endian host");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line) || line != "ply") throw ValidationError(path.string() + ": not a PLY file");
    std::size_t count = 0, stride = 0;
    bool have_vertex = false, in_vertex = false, have_format = false;
    std::map<std::string, Property> props;
    while (true) {
        if (!std::getline(in, line)) throw ValidationError(path.string() + ": unterminated PLY header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == "end_header") break;
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian")
                throw ValidationError(path.string() + ": only binary_little_endian PLY is supported");
            have_format = true;
        } else if (kw == "element") {
            std::string name;
            ls >> name;
            if (have_vertex) throw ValidationError(path.string() + ": unexpected element '" + name + "'");
            if (name != "vertex") throw ValidationError(path.string() + ": first element must be vertex");
            if (!(ls >> count)) throw ValidationError(path.string() + ": bad vertex count");
            have_vertex = in_vertex = true;
        } else if (kw == "property") {
            if (!in_vertex) throw ValidationError(path.string() + ": property outside the vertex element");
            std::string type, name;
            ls >> type >> name;
            if (type == "list") throw ValidationError(path.string() + ": list properties are not supported");
            const PlyType t = parse_type(type);
            if (!props.emplace(name, Property{name, t, stride}).second)
                throw ValidationError(path.string() + ": duplicate property '" + name + "'");
            stride += type_size(t);
        } else if (kw != "comment" && kw != "obj_info" && !kw.empty()) {
            throw ValidationError(path.string() + ": malformed PLY header line '" + line + "'");
        }
    }
    if (!have_format || !have_vertex) throw ValidationError(path.string() + ": malformed PLY header");

    auto require = [&](const std::string& n) -> const Property& {
        const auto it = props.find(n);
        if (it == props.end()) throw ValidationError(path.string() + ": missing property '" + n + "'");
        return it->second;
    };
    std::vector<const Property*> fixed;
    for (const char* n : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
                          "rot_0", "rot_1", "rot_2", "rot_3"})
        fixed.push_back(&require(n));
    int rest_count = 0;
    while (props.count("f_rest_" + std::to_string(rest_count))) ++rest_count;
    int degree = -1;
    for (int d = 0; d <= 3; ++d)
        if (3 * (sh_coeff_count(d) - 1) == rest_count) degree = d;
    if (degree < 0) throw ValidationError(path.string() + ": f_rest count does not match an SH degree");
    const int rest = sh_coeff_count(degree) - 1;
    std::vector<const Property*> rest_props;
    for (int i = 0; i < rest_count; ++i) rest_props.push_back(&props.at("f_rest_" + std::to_string(i)));
    const bool has_kea = props.count("kea_0") && props.count("kea_1");
    if (props.count("kea_0") != props.count("kea_1"))
        throw ValidationError(path.string() + ": kea_0 and kea_1 must appear together");
    const Property* created = props.count("created_at") ? &props.at("created_at") : nullptr;

    std::vector<std::uint8_t> data(count * stride);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (in.gcount() != static_cast<std::streamsize>(data.size()))
        throw ValidationError(path.string() + ": truncated PLY body");

    LoadedScene res;
    res.kea_defaulted = !has_kea;
    if (!has_kea) spdlog::warn("{}: no kea_* properties; KEA logits default to (0, 0)", path.string());
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint8_t* row = data.data() + i * stride;
        auto get = [&](const Property& p) { return read_value(row + p.offset, p.type); };
        Gaussian g;
        g.mu = Vec3(get(*fixed[0]), get(*fixed[1]), get(*fixed[2]));
        g.sh = Eigen::VectorXd::Zero(3 * sh_coeff_count(degree));
        for (int c = 0; c < 3; ++c) {
            g.sh[c] = get(*fixed[3 + c]);
            for (int k = 1; k <= rest; ++k) g.sh[k * 3 + c] = get(*rest_props[c * rest + (k - 1)]);
        }
        g.opacity_logit = get(*fixed[6]);
        g.log_scale = Vec3(get(*fixed[7]), get(*fixed[8]), get(*fixed[9]));
        g.rot = Vec4(get(*fixed[10]), get(*fixed[11]), get(*fixed[12]), get(*fixed[13]));
        if (has_kea) g.m = Vec2(get(props.at("kea_0")), get(props.at("kea_1")));
        if (created) g.created_at = static_cast<std::int64_t>(get(*created));
        if (!g.finite()) throw ValidationError(path.string() + ": non-finite vertex " + std::to_string(i));
        res.scene.push_back(std::move(g));
    }

    const auto sidecar = trajectory_path(path);
    if (std::filesystem::exists(sidecar)) std::tie(res.trajectory, res.intrinsics) = load_trajectory(sidecar);
    return res;
}

} // namespace keasplat
