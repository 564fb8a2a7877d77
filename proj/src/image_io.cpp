// SPDX-License-Identifier: Apache-2.0
#include "keasplat/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

namespace keasplat {

namespace {

struct Decoded {
    int width = 0, height = 0, channels = 0;
    std::vector<std::uint8_t> pixels;
};

using FilePtr = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode), &std::fclose);
    if (!f) throw ValidationError("cannot open " + path.string());
    return f;
}

// libpng's simplified API; `gray` selects a 1-channel result.
Decoded decode_png(const std::filesystem::path& path, bool gray) {
    FilePtr f = open_file(path, "rb");
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_stdio(&image, f.get()))
        throw ValidationError(path.string() + ": " + image.message);
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Decoded d;
    d.width = static_cast<int>(image.width);
    d.height = static_cast<int>(image.height);
    d.channels = gray ? 1 : 3;
    d.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, d.pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw ValidationError(path.string() + ": " + msg);
    }
    return d;
}

void encode_png(const std::filesystem::path& path, int width, int height, int channels,
                const std::vector<std::uint8_t>& pixels) {
    FilePtr f = open_file(path, "wb");
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_stdio(&image, f.get(), 0, pixels.data(), 0, nullptr))
        throw std::runtime_error(path.string() + ": " + image.message);
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

} // namespace

Image read_png_rgb(const std::filesystem::path& path) {
    const Decoded d = decode_png(path, false);
    Image img(d.width, d.height, 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = d.pixels[i] / 255.0;
    return img;
}

Mask read_png_mask(const std::filesystem::path& path) {
    const Decoded d = decode_png(path, true);
    Mask m(d.width, d.height);
    for (std::size_t p = 0; p < m.data.size(); ++p) m.data[p] = d.pixels[p] > 127 ? 1 : 0;
    return m;
}

void write_png(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) throw ValidationError("write_png: need 1 or 3 channels");
    std::vector<std::uint8_t> px(img.data.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_byte(img.data[i]);
    encode_png(path, img.width, img.height, img.channels, px);
}

void write_png(const std::filesystem::path& path, const Mask& mask) {
    std::vector<std::uint8_t> px(mask.data.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.data[i] ? 255 : 0;
    encode_png(path, mask.width, mask.height, 1, px);
}

Image quantize8(const Image& img) {
    Image out = img;
    for (double& v : out.data) v = to_byte(v) / 255.0;
    return out;
}

Image read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::string magic;
    int width = 0, height = 0;
    double scale = 0.0;
    in >> magic;
    if (magic != "Pf") throw ValidationError(path.string() + ": bad PFM magic '" + magic + "'");
    if (!(in >> width >> height >> scale) || width <= 0 || height <= 0 || scale == 0.0)
        throw ValidationError(path.string() + ": malformed PFM header");
    in.get();  // single whitespace before the raster
    std::vector<std::uint32_t> raw(static_cast<std::size_t>(width) * height);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    if (in.gcount() != static_cast<std::streamsize>(raw.size() * 4))
        throw ValidationError(path.string() + ": truncated PFM raster");

    const bool file_little = scale < 0.0;
    const bool host_little = std::endian::native == std::endian::little;
    Image img(width, height, 1);
    for (int row = 0; row < height; ++row) {
        for (int x = 0; x < width; ++x) {
            std::uint32_t bits = raw[static_cast<std::size_t>(row) * width + x];
            if (file_little != host_little) bits = __builtin_bswap32(bits);
            const float v = std::bit_cast<float>(bits);
            if (!std::isfinite(v)) throw ValidationError(path.string() + ": non-finite PFM entry");
            img.at(x, height - 1 - row, 0) = v;
        }
    }
    return img;
}

void write_pfm(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 1) throw ValidationError("write_pfm: need a 1-channel image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open " + path.string());
    out << "Pf\n" << img.width << ' ' << img.height << "\n-1.0\n";
    std::vector<std::uint32_t> raw(img.pixel_count());
    for (int row = 0; row < img.height; ++row)
        for (int x = 0; x < img.width; ++x) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(img.at(x, img.height - 1 - row, 0)));
            if constexpr (std::endian::native != std::endian::little) bits = __builtin_bswap32(bits);
            raw[static_cast<std::size_t>(row) * img.width + x] = bits;
        }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    if (!out) throw std::runtime_error("write_pfm: failed writing " + path.string());
}

} // namespace keasplat
