#pragma once

// Binary PPM (P6, maxval 255) for sRGB images.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "diffuseraw/error.hpp"
#include "diffuseraw/image.hpp"

namespace diffuseraw {

inline std::uint8_t quantize_u8(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline void save_ppm(const std::filesystem::path& path, const LinearImage& img) {
    if (img.channels != 3) {
        throw dimension_error("save_ppm: expected 3 channels, got " + std::to_string(img.channels));
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> bytes(img.data.size());
    std::transform(img.data.begin(), img.data.end(), bytes.begin(), quantize_u8);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw io_error("write failed: " + path.string());
}

namespace detail {

inline int read_ppm_int(std::istream& is, const std::string& path) {
    int c = is.peek();
    while (c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '#') {
        if (c == '#') {
            std::string skip;
            std::getline(is, skip);
        } else {
            is.get();
        }
        c = is.peek();
    }
    int v = 0;
    if (!(is >> v)) throw format_error(path + ": malformed PPM header");
    return v;
}

} // namespace detail

inline LinearImage load_ppm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string());
    char magic[2];
    if (!is.read(magic, 2) || magic[0] != 'P' || magic[1] != '6') {
        throw format_error(path.string() + ": not a binary PPM (P6)");
    }
    int w = detail::read_ppm_int(is, path.string());
    int h = detail::read_ppm_int(is, path.string());
    int maxval = detail::read_ppm_int(is, path.string());
    if (w <= 0 || h <= 0 || maxval != 255) {
        throw format_error(path.string() + ": unsupported PPM geometry or maxval");
    }
    is.get();
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * 3);
    if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
        throw format_error(path.string() + ": truncated PPM payload");
    }
    LinearImage img(w, h, 3, colorspace::srgb);
    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0f;
    return img;
}

} // namespace diffuseraw
