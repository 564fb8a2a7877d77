// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "keasplat/core.hpp"

namespace keasplat::synth {

/// Writes `scene` in the plain 3DGS layout (no kea_* or created_at), as other tools export it.
void write_stock_3dgs_ply(const std::filesystem::path& path, const GaussianScene& scene);

} // namespace keasplat::synth
