// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string_view>

#include "keasplat/blend.hpp"
#include "keasplat/expansion.hpp"

namespace keasplat {

/// Constants of the synthetic denoiser used by blend-demo.
struct SyntheticDenoiserConfig {
    double a = -0.5;
    double b = 0.2;
    double c = 0.1;
};

/// Everything a TOML config can set. Top-level keys are ExpansionConfig fields;
/// the tables [loss_weights], [pose_cfg], [lr], [blend] and [synthetic_denoiser]
/// mirror their structs. Every key is optional; unknown keys are rejected.
struct AppConfig {
    ExpansionConfig expansion;
    BlendConfig blend;
    SyntheticDenoiserConfig denoiser;
};

AppConfig parse_config(std::string_view toml_text, std::string_view source = "config");
AppConfig load_config(const std::filesystem::path& path);

} // namespace keasplat
