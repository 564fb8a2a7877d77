// SPDX-License-Identifier: Apache-2.0
// Closed-form evaluation of the autoregressive edit under the linear denoiser.
#pragma once

#include <vector>

#include "keasplat/blend.hpp"

namespace keasplat::synth {

struct ClosedFormEdit {
    /// latents[n][t]: latent of frame n after denoising step t.
    std::vector<std::vector<std::vector<double>>> latents;
    /// Mask-composited, clamped output of every frame.
    std::vector<Image> edited;
};

/// With eps = a e + b mean(cond) + c [text], every step of frame n is the affine map
/// e <- (1 - A/T) e - B/T, where A and B depend only on the guidance weights, the
/// original frame mean and the means of the previously edited frames. Requires init_noise = 0.
ClosedFormEdit closed_form_edit(const std::vector<Frame>& frames, double a, double b, double c,
                                const BlendConfig& cfg);

/// Largest |latent - closed form| over every frame, step and element.
double max_trace_deviation(const BlendResult& result, const ClosedFormEdit& oracle);

} // namespace keasplat::synth
