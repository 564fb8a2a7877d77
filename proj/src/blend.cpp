// SPDX-License-Identifier: Apache-2.0
#include "keasplat/blend.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace keasplat {

namespace {

void require_same(const NoiseField& a, const NoiseField& b, const char* what) {
    if (!a.same_shape(b) || a.size() != b.size()) throw ValidationError(std::string(what) + ": noise field shape mismatch");
}

void require_finite(const NoiseField& f, const char* what) {
    for (double v : f.data)
        if (!std::isfinite(v)) throw NumericalError(std::string(what) + ": non-finite noise estimate");
}

} // namespace

NoiseField::NoiseField(std::vector<std::size_t> shape_, double fill) : shape(std::move(shape_)) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    data.assign(n, fill);
}

NoiseField NoiseField::from_image(const Image& img) {
    NoiseField f({static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width),
                  static_cast<std::size_t>(img.channels)});
    f.data = img.data;
    return f;
}

Image NoiseField::to_image(int width, int height, int channels) const {
    Image img(width, height, channels);
    if (img.data.size() != data.size()) throw ValidationError("NoiseField::to_image: size mismatch");
    img.data = data;
    return img;
}

double NoiseField::mean() const {
    if (data.empty()) return 0.0;
    return std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(data.size());
}

std::vector<double> decay_weights(int w, double lambda_d) {
    if (w < 1) throw ValidationError("decay_weights: window must be at least 1");
    if (!(lambda_d > 0.0 && lambda_d <= 1.0)) throw ValidationError("decay_weights: lambda must lie in (0, 1]");
    std::vector<double> beta(w);
    // Built from the newest entry backwards so that consecutive ratios are exact powers.
    beta[w - 1] = 1.0;
    for (int n = w - 2; n >= 0; --n) beta[n] = beta[n + 1] * lambda_d;
    double sum = 0.0;
    for (double b : beta) sum += b;
    for (double& b : beta) b /= sum;
    return beta;
}

NoiseField blended_noise(const std::vector<NoiseField>& estimates, const std::vector<double>& weights) {
    if (estimates.empty() || estimates.size() != weights.size())
        throw ValidationError("blended_noise: need one weight per estimate");
    double sum = 0.0;
    for (double w : weights) sum += w;
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("blended_noise: weights must sum to 1");
    NoiseField out(estimates.front().shape);
    for (std::size_t n = 0; n < estimates.size(); ++n) {
        require_same(estimates[n], out, "blended_noise");
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += weights[n] * estimates[n].data[i];
    }
    return out;
}

NoiseField cfg_compose(const NoiseField& eps_uncond, const NoiseField& eps_img, const NoiseField& eps_full,
                       double s_f, double s_T) {
    require_same(eps_uncond, eps_img, "cfg_compose");
    require_same(eps_uncond, eps_full, "cfg_compose");
    NoiseField out(eps_uncond.shape);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double u = eps_uncond.data[i], im = eps_img.data[i], f = eps_full.data[i];
        // Regrouped so integer guidance scales reproduce the inputs exactly.
        out.data[i] = (1.0 - s_f) * u + (s_f - s_T) * im + s_T * f;
    }
    return out;
}

NoiseField score_estimate(const NoiseField& eps_tilde, const NoiseField& eps_bar, double gamma_f, double gamma_E) {
    require_same(eps_tilde, eps_bar, "score_estimate");
    NoiseField out(eps_tilde.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = gamma_f * eps_tilde.data[i] + gamma_E * eps_bar.data[i];
    return out;
}

void BlendConfig::validate() const {
    if (window < 1) throw ValidationError("blend config: window must be at least 1");
    if (!(lambda_d > 0.0 && lambda_d <= 1.0)) throw ValidationError("blend config: lambda_d must lie in (0, 1]");
    if (!(gamma_f >= 0.0) || !(gamma_E >= 0.0)) throw ValidationError("blend config: gammas must be non-negative");
    if (!std::isfinite(s_f) || !std::isfinite(s_T)) throw ValidationError("blend config: guidance scales must be finite");
    if (steps < 1) throw ValidationError("blend config: steps must be positive");
    if (!(init_noise >= 0.0)) throw ValidationError("blend config: init_noise must be non-negative");
}

NoiseField SyntheticDenoiser::predict(const NoiseField& latent, const NoiseField* cond, bool text, int) const {
    const double bias = (cond ? b_ * cond->mean() : 0.0) + (text ? c_ : 0.0);
    NoiseField out(latent.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a_ * latent.data[i] + bias;
    return out;
}

BlendResult autoregressive_edit(const std::vector<Frame>& frames, const Denoiser& denoiser, const BlendConfig& cfg,
                                bool keep_trace) {
    cfg.validate();
    if (frames.empty()) throw ValidationError("autoregressive_edit: no frames");
    BlendResult res;
    std::vector<NoiseField> edited_fields;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double dt = 1.0 / cfg.steps;

    for (std::size_t n = 0; n < frames.size(); ++n) {
        const Frame& frame = frames[n];
        frame.validate();
        const NoiseField original = NoiseField::from_image(frame.image);
        NoiseField latent = original;
        if (cfg.init_noise > 0.0)
            for (double& v : latent.data) v += cfg.init_noise * normal(rng);

        const std::size_t window = std::min<std::size_t>(cfg.window, edited_fields.size());
        const std::vector<double> beta =
            window > 0 ? decay_weights(static_cast<int>(window), cfg.lambda_d) : std::vector<double>{};
        const bool use_window = window > 0 && cfg.gamma_E != 0.0;

        for (int t = 0; t < cfg.steps; ++t) {
            auto check = [&](NoiseField f) {
                if (!f.same_shape(latent) || f.size() != latent.size())
                    throw ValidationError("autoregressive_edit: denoiser changed the latent shape");
                require_finite(f, "autoregressive_edit");
                return f;
            };
            const NoiseField eps_u = check(denoiser.predict(latent, nullptr, false, t));
            const NoiseField eps_img = check(denoiser.predict(latent, &original, false, t));
            const NoiseField eps_full = check(denoiser.predict(latent, &original, true, t));
            const NoiseField eps_tilde = cfg_compose(eps_u, eps_img, eps_full, cfg.s_f, cfg.s_T);

            NoiseField eps_bar, eps;
            if (use_window) {
                // Oldest to newest, so the previous frame carries the largest weight.
                std::vector<NoiseField> neighbors;
                for (std::size_t j = edited_fields.size() - window; j < edited_fields.size(); ++j)
                    neighbors.push_back(check(denoiser.predict(latent, &edited_fields[j], false, t)));
                eps_bar = blended_noise(neighbors, beta);
                eps = score_estimate(eps_tilde, eps_bar, cfg.gamma_f, cfg.gamma_E);
            } else {
                eps = NoiseField(eps_tilde.shape);
                for (std::size_t i = 0; i < eps.size(); ++i) eps.data[i] = cfg.gamma_f * eps_tilde.data[i];
            }
            for (std::size_t i = 0; i < latent.size(); ++i) latent.data[i] -= dt * eps.data[i];
            if (keep_trace) res.trace.push_back({static_cast<int>(n), t, eps_tilde, eps_bar, eps, latent});
        }

        Frame out = frame;
        for (std::size_t p = 0; p < frame.image.pixel_count(); ++p) {
            if (!frame.mask.data[p]) continue;
            for (int c = 0; c < 3; ++c) out.image.data[3 * p + c] = std::clamp(latent.data[3 * p + c], 0.0, 1.0);
        }
        edited_fields.push_back(NoiseField::from_image(out.image));
        res.edited.push_back(std::move(out));
    }
    return res;
}

} // namespace keasplat
