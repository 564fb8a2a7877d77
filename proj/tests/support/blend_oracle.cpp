// SPDX-License-Identifier: Apache-2.0
#include "blend_oracle.hpp"

#include <algorithm>
#include <cmath>

namespace keasplat::synth {

namespace {

double image_mean(const Image& img) {
    double s = 0.0;
    for (double v : img.data) s += v;
    return s / static_cast<double>(img.data.size());
}

} // namespace

ClosedFormEdit closed_form_edit(const std::vector<Frame>& frames, double a, double b, double c,
                                const BlendConfig& cfg) {
    ClosedFormEdit out;
    std::vector<double> edited_means;
    const double dt = 1.0 / cfg.steps;
    for (const Frame& f : frames) {
        const double mu_o = image_mean(f.image);
        const std::size_t window = std::min<std::size_t>(cfg.window, edited_means.size());
        double slope = cfg.gamma_f * a;
        double offset = cfg.gamma_f * (cfg.s_f * b * mu_o + cfg.s_T * c);
        if (window > 0 && cfg.gamma_E != 0.0) {
            // Weights lambda^(window - 1 - j) normalized, newest frame last.
            double norm = 0.0, blend = 0.0;
            for (std::size_t j = 0; j < window; ++j) norm += std::pow(cfg.lambda_d, static_cast<double>(window - 1 - j));
            for (std::size_t j = 0; j < window; ++j)
                blend += std::pow(cfg.lambda_d, static_cast<double>(window - 1 - j)) / norm *
                         edited_means[edited_means.size() - window + j];
            slope += cfg.gamma_E * a;
            offset += cfg.gamma_E * b * blend;
        }
        const double r = 1.0 - dt * slope;
        std::vector<std::vector<double>> steps;
        for (int t = 1; t <= cfg.steps; ++t) {
            const double rt = std::pow(r, t);
            std::vector<double> e(f.image.data.size());
            for (std::size_t i = 0; i < e.size(); ++i)
                e[i] = slope != 0.0 ? rt * f.image.data[i] - offset * (1.0 - rt) / slope
                                    : f.image.data[i] - t * dt * offset;
            steps.push_back(std::move(e));
        }
        Image edited = f.image;
        for (std::size_t i = 0; i < edited.data.size(); ++i)
            if (f.mask.data[i / 3]) edited.data[i] = std::clamp(steps.back()[i], 0.0, 1.0);
        edited_means.push_back(image_mean(edited));
        out.latents.push_back(std::move(steps));
        out.edited.push_back(std::move(edited));
    }
    return out;
}

double max_trace_deviation(const BlendResult& result, const ClosedFormEdit& oracle) {
    double worst = 0.0;
    std::size_t row = 0;
    for (std::size_t n = 0; n < oracle.latents.size(); ++n)
        for (std::size_t t = 0; t < oracle.latents[n].size(); ++t, ++row) {
            if (row >= result.trace.size()) return INFINITY;
            const auto& step = result.trace[row];
            if (step.frame != static_cast<int>(n) || step.step != static_cast<int>(t)) return INFINITY;
            const auto& expect = oracle.latents[n][t];
            if (step.latent.size() != expect.size()) return INFINITY;
            for (std::size_t i = 0; i < expect.size(); ++i)
                worst = std::max(worst, std::abs(step.latent.data[i] - expect[i]));
        }
    if (row != result.trace.size()) return INFINITY;
    return worst;
}

} // namespace keasplat::synth
