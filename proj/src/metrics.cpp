// SPDX-License-Identifier: Apache-2.0
#include "keasplat/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace keasplat {

double psnr(const Image& a, const Image& b) {
    require_same_shape(a, b, "psnr");
    if (a.data.empty()) throw ValidationError("psnr: empty image");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double e_psnr(const std::vector<Image>& renders_edited, const std::vector<Image>& renders_reference) {
    if (renders_edited.empty()) throw ValidationError("e_psnr: no views");
    if (renders_edited.size() != renders_reference.size()) throw ValidationError("e_psnr: view counts differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < renders_edited.size(); ++i) sum += psnr(renders_edited[i], renders_reference[i]);
    return sum / static_cast<double>(renders_edited.size());
}

} // namespace keasplat
