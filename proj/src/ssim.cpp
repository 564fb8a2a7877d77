// SPDX-License-Identifier: Apache-2.0
#include "keasplat/ssim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace keasplat {

namespace {

using S = SsimConstants;
constexpr int kHalf = S::kWindow / 2;

std::array<double, S::kWindow> gaussian_taps() {
    std::array<double, S::kWindow> k{};
    double sum = 0.0;
    for (int i = 0; i < S::kWindow; ++i) {
        const double d = i - kHalf;
        k[i] = std::exp(-d * d / (2.0 * S::kSigma * S::kSigma));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Single-channel plane, row-major.
struct Plane {
    int w = 0, h = 0;
    std::vector<double> v;
    Plane(int w_, int h_) : w(w_), h(h_), v(static_cast<std::size_t>(w_) * h_, 0.0) {}
    double& operator()(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
    double operator()(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

// Separable window filter with border renormalization, and its transpose.
class WindowFilter {
public:
    WindowFilter(int w, int h) : w_(w), h_(h), taps_(gaussian_taps()), norm_x_(w), norm_y_(h) {
        for (int i = 0; i < w; ++i) norm_x_[i] = mass(i, w);
        for (int i = 0; i < h; ++i) norm_y_[i] = mass(i, h);
    }

    Plane apply(const Plane& in) const {
        Plane tmp(w_, h_), out(w_, h_);
        for (int y = 0; y < h_; ++y)
            for (int x = 0; x < w_; ++x) {
                double s = 0.0;
                for (int j = std::max(0, x - kHalf); j <= std::min(w_ - 1, x + kHalf); ++j)
                    s += taps_[j - x + kHalf] * in(j, y);
                tmp(x, y) = s / norm_x_[x];
            }
        for (int y = 0; y < h_; ++y)
            for (int x = 0; x < w_; ++x) {
                double s = 0.0;
                for (int j = std::max(0, y - kHalf); j <= std::min(h_ - 1, y + kHalf); ++j)
                    s += taps_[j - y + kHalf] * tmp(x, j);
                out(x, y) = s / norm_y_[y];
            }
        return out;
    }

    Plane transpose(const Plane& in) const {
        Plane tmp(w_, h_), out(w_, h_);
        for (int y = 0; y < h_; ++y)
            for (int x = 0; x < w_; ++x) {
                const double g = in(x, y) / norm_y_[y];
                for (int j = std::max(0, y - kHalf); j <= std::min(h_ - 1, y + kHalf); ++j)
                    tmp(x, j) += taps_[j - y + kHalf] * g;
            }
        for (int y = 0; y < h_; ++y)
            for (int x = 0; x < w_; ++x) {
                const double g = tmp(x, y) / norm_x_[x];
                for (int j = std::max(0, x - kHalf); j <= std::min(w_ - 1, x + kHalf); ++j)
                    out(j, y) += taps_[j - x + kHalf] * g;
            }
        return out;
    }

private:
    double mass(int i, int n) const {
        double s = 0.0;
        for (int j = std::max(0, i - kHalf); j <= std::min(n - 1, i + kHalf); ++j) s += taps_[j - i + kHalf];
        return s;
    }

    int w_, h_;
    std::array<double, S::kWindow> taps_;
    std::vector<double> norm_x_, norm_y_;
};

Plane channel(const Image& img, int c) {
    Plane p(img.width, img.height);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) p.v[i] = img.data[i * img.channels + c];
    return p;
}

} // namespace

double ssim(const Image& a, const Image& b, Image* grad_a) {
    require_same_shape(a, b, "ssim");
    if (a.width < S::kWindow || a.height < S::kWindow)
        throw ValidationError("ssim: image smaller than the 11x11 window");

    const WindowFilter f(a.width, a.height);
    const std::size_t n = a.pixel_count();
    const double inv_count = 1.0 / static_cast<double>(n * a.channels);
    if (grad_a) *grad_a = Image(a.width, a.height, a.channels);

    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        const Plane pa = channel(a, c), pb = channel(b, c);
        Plane aa(a.width, a.height), bb(a.width, a.height), ab(a.width, a.height);
        for (std::size_t i = 0; i < n; ++i) {
            aa.v[i] = pa.v[i] * pa.v[i];
            bb.v[i] = pb.v[i] * pb.v[i];
            ab.v[i] = pa.v[i] * pb.v[i];
        }
        const Plane mu_a = f.apply(pa), mu_b = f.apply(pb);
        const Plane e_aa = f.apply(aa), e_bb = f.apply(bb), e_ab = f.apply(ab);

        Plane g_mu(a.width, a.height), g_aa(a.width, a.height), g_ab(a.width, a.height);
        for (std::size_t i = 0; i < n; ++i) {
            const double ma = mu_a.v[i], mb = mu_b.v[i];
            const double var_a = e_aa.v[i] - ma * ma;
            const double var_b = e_bb.v[i] - mb * mb;
            const double cov = e_ab.v[i] - ma * mb;
            const double n1 = 2.0 * ma * mb + S::kC1, n2 = 2.0 * cov + S::kC2;
            const double d1 = ma * ma + mb * mb + S::kC1, d2 = var_a + var_b + S::kC2;
            const double s = (n1 * n2) / (d1 * d2);
            total += s;
            if (grad_a) {
                const double ds_dvar = -s / d2;
                const double ds_dcov = 2.0 * n1 / (d1 * d2);
                const double ds_dmu = 2.0 * mb * n2 / (d1 * d2) - s * 2.0 * ma / d1;
                g_aa.v[i] = ds_dvar * inv_count;
                g_ab.v[i] = ds_dcov * inv_count;
                g_mu.v[i] = (ds_dmu - 2.0 * ma * ds_dvar - mb * ds_dcov) * inv_count;
            }
        }
        if (grad_a) {
            const Plane t_mu = f.transpose(g_mu), t_aa = f.transpose(g_aa), t_ab = f.transpose(g_ab);
            for (std::size_t i = 0; i < n; ++i)
                grad_a->data[i * a.channels + c] = t_mu.v[i] + 2.0 * pa.v[i] * t_aa.v[i] + pb.v[i] * t_ab.v[i];
        }
    }
    return total * inv_count;
}

double d_ssim(const Image& a, const Image& b, Image* grad_a) {
    const double s = ssim(a, b, grad_a);
    if (grad_a)
        for (double& g : grad_a->data) g *= -0.5;
    return 0.5 * (1.0 - s);
}

} // namespace keasplat
