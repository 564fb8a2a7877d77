// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "keasplat/core.hpp"

namespace keasplat {

/// Dense tensor of noise estimates with its shape.
struct NoiseField {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    NoiseField() = default;
    explicit NoiseField(std::vector<std::size_t> shape_, double fill = 0.0);

    static NoiseField from_image(const Image& img);
    /// Copies the data into an image of the given size; the field must hold w*h*c values.
    Image to_image(int width, int height, int channels) const;

    std::size_t size() const { return data.size(); }
    bool same_shape(const NoiseField& o) const { return shape == o.shape; }
    double mean() const;
};

/// beta_n = lambda^(w-n) / sum_j lambda^(w-j), n = 1..w; the last entry is largest.
std::vector<double> decay_weights(int w, double lambda_d);

/// Elementwise sum_n beta_n eps_n; the weights must sum to 1 within 1e-9.
NoiseField blended_noise(const std::vector<NoiseField>& estimates, const std::vector<double>& weights);

/// eps_u + s_f (eps_img - eps_u) + s_T (eps_full - eps_img).
NoiseField cfg_compose(const NoiseField& eps_uncond, const NoiseField& eps_img, const NoiseField& eps_full,
                       double s_f, double s_T);

/// gamma_f eps_tilde + gamma_E eps_bar.
NoiseField score_estimate(const NoiseField& eps_tilde, const NoiseField& eps_bar, double gamma_f, double gamma_E);

struct BlendConfig {
    int window = 3;
    double lambda_d = 0.5;
    double gamma_f = 0.7;
    double gamma_E = 0.3;
    double s_f = 1.5;
    double s_T = 7.5;
    int steps = 20;
    std::uint64_t seed = 0;
    /// Std-dev of Gaussian noise added to the starting latent.
    double init_noise = 0.0;

    void validate() const;
};

/// Noise predictor epsilon(e_t, cond, text, t). `cond` may be null (unconditional).
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual NoiseField predict(const NoiseField& latent, const NoiseField* cond, bool text, int step) const = 0;
};

/// eps = a e + b mean(cond) + c [text], elementwise.
class SyntheticDenoiser final : public Denoiser {
public:
    SyntheticDenoiser(double a, double b, double c) : a_(a), b_(b), c_(c) {}
    NoiseField predict(const NoiseField& latent, const NoiseField* cond, bool text, int step) const override;

    double a() const { return a_; }
    double b() const { return b_; }
    double c() const { return c_; }

private:
    double a_, b_, c_;
};

/// One denoising step of one frame. eps_bar is empty when the window was empty.
struct BlendTraceStep {
    int frame = 0;
    int step = 0;
    NoiseField eps_tilde;
    NoiseField eps_bar;
    NoiseField eps;
    NoiseField latent;  // after the update
};

struct BlendResult {
    std::vector<Frame> edited;
    std::vector<BlendTraceStep> trace;
};

/// Edits frames in order; each frame's noise blends its own guided estimate with
/// image-conditional estimates for the previous `window` edited frames. The
/// result keeps original pixels wherever the mask is 0.
BlendResult autoregressive_edit(const std::vector<Frame>& frames, const Denoiser& denoiser, const BlendConfig& cfg,
                                bool keep_trace = false);

} // namespace keasplat
