// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace keasplat {

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

/// Adam moments for a flat parameter array with one shared step counter.
class Adam {
public:
    explicit Adam(std::size_t size = 0, AdamParams params = {})
        : params_(params), m_(size, 0.0), v_(size, 0.0) {}

    std::size_t size() const { return m_.size(); }
    std::int64_t steps() const { return t_; }

    void begin_step() {
        ++t_;
        c1_ = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
        c2_ = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
    }

    /// Feeds one gradient entry and returns the increment to add to the parameter.
    double delta(std::size_t i, double grad, double lr) {
        m_[i] = params_.beta1 * m_[i] + (1.0 - params_.beta1) * grad;
        v_[i] = params_.beta2 * v_[i] + (1.0 - params_.beta2) * grad * grad;
        const double m_hat = m_[i] / c1_;
        const double v_hat = v_[i] / c2_;
        return -lr * m_hat / (std::sqrt(v_hat) + params_.eps);
    }

    void reset() {
        std::fill(m_.begin(), m_.end(), 0.0);
        std::fill(v_.begin(), v_.end(), 0.0);
        t_ = 0;
    }

    /// Rebuilds the moments block-wise: block b takes the moments of old block
    /// source[b], or zeros when source[b] < 0. The step counter is kept.
    void remap(const std::vector<std::ptrdiff_t>& source, std::size_t block) {
        std::vector<double> m(source.size() * block, 0.0), v(source.size() * block, 0.0);
        for (std::size_t b = 0; b < source.size(); ++b) {
            if (source[b] < 0) continue;
            const std::size_t from = static_cast<std::size_t>(source[b]) * block;
            for (std::size_t j = 0; j < block; ++j) {
                m[b * block + j] = m_[from + j];
                v[b * block + j] = v_[from + j];
            }
        }
        m_.swap(m);
        v_.swap(v);
    }

private:
    AdamParams params_;
    std::vector<double> m_, v_;
    std::int64_t t_ = 0;
    double c1_ = 1.0, c2_ = 1.0;
};

} // namespace keasplat
