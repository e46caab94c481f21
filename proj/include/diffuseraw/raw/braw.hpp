#pragma once

// .braw container, little-endian:
//   "BRAW" | u16 version=1 | u32 width | u32 height | u8 pattern |
//   u16 black_level | u16 white_level | u64 exposure_us | u32 iso |
//   height*width u16 samples, row-major.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "diffuseraw/error.hpp"
#include "diffuseraw/io/binary.hpp"
#include "diffuseraw/raw/bayer.hpp"

namespace diffuseraw {

inline constexpr std::uint16_t braw_version = 1;

inline void write_braw(std::ostream& os, const BayerImage& img) {
    img.validate();
    os.write("BRAW", 4);
    io::write_le<std::uint16_t>(os, braw_version);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(img.width));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(img.height));
    io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(img.pattern));
    io::write_le<std::uint16_t>(os, img.black_level);
    io::write_le<std::uint16_t>(os, img.white_level);
    io::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(std::llround(img.exposure_s * 1e6)));
    io::write_le<std::uint32_t>(os, img.iso);
    for (auto v : img.data) io::write_le<std::uint16_t>(os, v);
}

inline BayerImage read_braw(std::istream& is) {
    io::expect_magic(is, "BRAW", "braw");
    auto version = io::read_le<std::uint16_t>(is, "braw version");
    if (version != braw_version) {
        throw format_error("braw: unsupported version " + std::to_string(version));
    }
    BayerImage img;
    img.width = static_cast<int>(io::read_le<std::uint32_t>(is, "braw width"));
    img.height = static_cast<int>(io::read_le<std::uint32_t>(is, "braw height"));
    auto pattern = io::read_le<std::uint8_t>(is, "braw pattern");
    if (pattern > 3) throw format_error("braw: invalid CFA pattern code " + std::to_string(pattern));
    img.pattern = static_cast<cfa_pattern>(pattern);
    img.black_level = io::read_le<std::uint16_t>(is, "braw black_level");
    img.white_level = io::read_le<std::uint16_t>(is, "braw white_level");
    img.exposure_s = static_cast<double>(io::read_le<std::uint64_t>(is, "braw exposure")) * 1e-6;
    img.iso = io::read_le<std::uint32_t>(is, "braw iso");
    if (img.width <= 0 || img.height <= 0 || img.width % 2 || img.height % 2 ||
        static_cast<long long>(img.width) * img.height > (1LL << 30)) {
        throw format_error("braw: invalid dimensions " + std::to_string(img.height) + "x" +
                           std::to_string(img.width));
    }
    img.data.resize(static_cast<std::size_t>(img.width) * img.height);
    for (auto& v : img.data) v = io::read_le<std::uint16_t>(is, "braw samples");
    img.validate();
    return img;
}

inline void save_braw(const std::filesystem::path& path, const BayerImage& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    write_braw(os, img);
    if (!os) throw io_error("write failed: " + path.string());
}

inline BayerImage load_braw(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string());
    try {
        return read_braw(is);
    } catch (const format_error& e) {
        throw format_error(path.string() + ": " + e.what());
    }
}

} // namespace diffuseraw
