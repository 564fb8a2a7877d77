// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "blend_oracle.hpp"
#include "keasplat/blend.hpp"

using namespace keasplat;

namespace {

NoiseField random_field(std::mt19937_64& rng, std::vector<std::size_t> shape) {
    std::normal_distribution<double> n(0.0, 1.0);
    NoiseField f(std::move(shape));
    for (double& v : f.data) v = n(rng);
    return f;
}

std::vector<Frame> random_frames(std::mt19937_64& rng, int count, int w, int h) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Frame> frames;
    for (int i = 0; i < count; ++i) {
        Frame f;
        f.index = i;
        f.image = Image(w, h, 3);
        for (double& v : f.image.data) v = u(rng);
        f.mask = Mask(w, h);
        for (auto& m : f.mask.data) m = u(rng) < 0.4;
        frames.push_back(std::move(f));
    }
    return frames;
}

} // namespace

TEST_SUITE("blend") {

TEST_CASE("decay weights for w = 3, lambda = 0.5") {
    const auto b = decay_weights(3, 0.5);
    CHECK(std::abs(b[0] - 1.0 / 7.0) < 1e-15);
    CHECK(std::abs(b[1] - 2.0 / 7.0) < 1e-15);
    CHECK(std::abs(b[2] - 4.0 / 7.0) < 1e-15);
}

TEST_CASE("decay weights sum to one with exact ratios") {
    for (int w = 1; w <= 12; ++w)
        for (double lambda : {0.1, 0.25, 0.5, 0.9, 1.0}) {
            const auto b = decay_weights(w, lambda);
            double sum = 0.0;
            for (double v : b) sum += v;
            CHECK(std::abs(sum - 1.0) < 1e-12);
            for (int n = 0; n + 1 < w; ++n) {
                CHECK(b[n] / b[n + 1] == doctest::Approx(lambda).epsilon(1e-14));
                if (lambda < 1.0) CHECK(b[n] < b[n + 1]);
            }
        }
    CHECK_THROWS_AS(decay_weights(0, 0.5), ValidationError);
    CHECK_THROWS_AS(decay_weights(3, 0.0), ValidationError);
    CHECK_THROWS_AS(decay_weights(3, 1.5), ValidationError);
}

TEST_CASE("cfg composition telescopes") {
    std::mt19937_64 rng(51);
    const NoiseField u = random_field(rng, {4, 5}), im = random_field(rng, {4, 5}), full = random_field(rng, {4, 5});
    CHECK(cfg_compose(u, im, full, 1.0, 1.0).data == full.data);
    CHECK(cfg_compose(u, im, full, 0.0, 0.0).data == u.data);
    CHECK(cfg_compose(u, im, full, 1.0, 0.0).data == im.data);
    CHECK_THROWS_AS(cfg_compose(u, random_field(rng, {5, 4}), full, 1.0, 1.0), ValidationError);
}

TEST_CASE("field operations are linear") {
    std::mt19937_64 rng(52);
    const std::vector<std::size_t> shape{3, 3, 2};
    const NoiseField a = random_field(rng, shape), b = random_field(rng, shape), c = random_field(rng, shape);
    const NoiseField d = random_field(rng, shape), e = random_field(rng, shape), f = random_field(rng, shape);
    const double alpha = 0.7, beta = -1.3;
    auto mix = [&](const NoiseField& x, const NoiseField& y) {
        NoiseField out(shape);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = alpha * x.data[i] + beta * y.data[i];
        return out;
    };
    const NoiseField lhs = cfg_compose(mix(a, d), mix(b, e), mix(c, f), 1.5, 7.5);
    const NoiseField r1 = cfg_compose(a, b, c, 1.5, 7.5), r2 = cfg_compose(d, e, f, 1.5, 7.5);
    for (std::size_t i = 0; i < lhs.size(); ++i)
        CHECK(lhs.data[i] == doctest::Approx(alpha * r1.data[i] + beta * r2.data[i]).epsilon(1e-12));

    const auto w = decay_weights(2, 0.5);
    const NoiseField bl = blended_noise({mix(a, d), mix(b, e)}, w);
    const NoiseField b1 = blended_noise({a, b}, w), b2 = blended_noise({d, e}, w);
    for (std::size_t i = 0; i < bl.size(); ++i)
        CHECK(bl.data[i] == doctest::Approx(alpha * b1.data[i] + beta * b2.data[i]).epsilon(1e-12));

    const NoiseField s = score_estimate(mix(a, d), mix(b, e), 0.7, 0.3);
    const NoiseField s1 = score_estimate(a, b, 0.7, 0.3), s2 = score_estimate(d, e, 0.7, 0.3);
    for (std::size_t i = 0; i < s.size(); ++i)
        CHECK(s.data[i] == doctest::Approx(alpha * s1.data[i] + beta * s2.data[i]).epsilon(1e-12));
}

TEST_CASE("blended noise checks its weights") {
    std::mt19937_64 rng(53);
    const NoiseField a = random_field(rng, {2, 2}), b = random_field(rng, {2, 2});
    CHECK_THROWS_AS(blended_noise({a, b}, {0.5, 0.6}), ValidationError);
    CHECK_THROWS_AS(blended_noise({a}, {0.5, 0.5}), ValidationError);
    const NoiseField m = blended_noise({a, b}, {0.25, 0.75});
    CHECK(m.data[0] == doctest::Approx(0.25 * a.data[0] + 0.75 * b.data[0]));
}

TEST_CASE("autoregressive edit matches its closed form at every step") {
    std::mt19937_64 rng(54);
    const std::vector<Frame> frames = random_frames(rng, 5, 6, 4);
    for (double gamma_E : {0.0, 0.5, 1.0}) {
        BlendConfig cfg;
        cfg.gamma_E = gamma_E;
        const BlendResult res = autoregressive_edit(frames, SyntheticDenoiser(-0.5, 0.2, 0.1), cfg, true);
        const auto oracle = synth::closed_form_edit(frames, -0.5, 0.2, 0.1, cfg);
        CHECK(synth::max_trace_deviation(res, oracle) < 1e-9);
        for (std::size_t n = 0; n < frames.size(); ++n)
            for (std::size_t i = 0; i < oracle.edited[n].data.size(); ++i)
                CHECK(std::abs(res.edited[n].image.data[i] - oracle.edited[n].data[i]) < 1e-9);
    }
}

TEST_CASE("gamma_E = 0 reproduces independent editing byte for byte") {
    std::mt19937_64 rng(55);
    const std::vector<Frame> frames = random_frames(rng, 4, 5, 5);
    const SyntheticDenoiser den(-0.3, 0.4, 0.2);
    BlendConfig cfg;
    cfg.gamma_E = 0.0;
    const BlendResult joint = autoregressive_edit(frames, den, cfg);
    for (std::size_t n = 0; n < frames.size(); ++n) {
        const BlendResult single = autoregressive_edit({frames[n]}, den, cfg);
        CHECK(single.edited[0].image.data == joint.edited[n].image.data);
    }
}

TEST_CASE("pixels outside the mask are untouched") {
    std::mt19937_64 rng(56);
    const std::vector<Frame> frames = random_frames(rng, 3, 7, 6);
    BlendConfig cfg;
    cfg.init_noise = 0.3;
    cfg.seed = 9;
    const BlendResult res = autoregressive_edit(frames, SyntheticDenoiser(-0.5, 0.2, 0.1), cfg);
    for (std::size_t n = 0; n < frames.size(); ++n)
        for (std::size_t p = 0; p < frames[n].mask.data.size(); ++p)
            for (int ch = 0; ch < 3; ++ch) {
                const double v = res.edited[n].image.data[3 * p + ch];
                if (!frames[n].mask.data[p]) CHECK(v == frames[n].image.data[3 * p + ch]);
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
    const BlendResult again = autoregressive_edit(frames, SyntheticDenoiser(-0.5, 0.2, 0.1), cfg);
    CHECK(again.edited[2].image.data == res.edited[2].image.data);
}

TEST_CASE("blend config validation") {
    BlendConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.window = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = BlendConfig{};
    cfg.gamma_E = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    CHECK_THROWS_AS(autoregressive_edit({}, SyntheticDenoiser(0, 0, 0), BlendConfig{}), ValidationError);
}

TEST_CASE("cfg composition on scalar fields") {
    NoiseField u({1}), im({1}), full({1});
    u.data = {0.0};
    im.data = {1.0};
    full.data = {2.0};
    CHECK(cfg_compose(u, im, full, 1.5, 7.5).data[0] == 9.0);
}

}
