#pragma once

// NumPy .npy (format 1.0) float32 read/write for HxWxC images.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <regex>
#include <string>

#include "diffuseraw/error.hpp"
#include "diffuseraw/image.hpp"
#include "diffuseraw/io/binary.hpp"

namespace diffuseraw {

inline void save_npy(const std::filesystem::path& path, const LinearImage& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" +
                         std::to_string(img.height) + ", " + std::to_string(img.width) + ", " +
                         std::to_string(img.channels) + "), }";
    // magic(6) + version(2) + header_len(2) + header + '\n' is a multiple of 64
    std::size_t total = 10 + header.size() + 1;
    header.append((64 - total % 64) % 64, ' ');
    header.push_back('\n');
    os.write("\x93NUMPY", 6);
    os.put(1);
    os.put(0);
    io::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(header.size()));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (float v : img.data) io::write_le<float>(os, v);
    if (!os) throw io_error("write failed: " + path.string());
}

inline LinearImage load_npy(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string());
    char magic[6];
    if (!is.read(magic, 6) || std::string(magic, 6) != "\x93NUMPY") {
        throw format_error(path.string() + ": not an .npy file");
    }
    int major = is.get();
    is.get();
    if (major != 1) throw format_error(path.string() + ": unsupported .npy version");
    auto len = io::read_le<std::uint16_t>(is, "npy header length");
    std::string header(len, '\0');
    if (!is.read(header.data(), len)) throw format_error(path.string() + ": truncated header");
    if (header.find("'<f4'") == std::string::npos || header.find("False") == std::string::npos) {
        throw format_error(path.string() + ": only C-ordered little-endian float32 is supported");
    }
    std::smatch m;
    static const std::regex shape_re(R"('shape':\s*\((\d+),\s*(\d+),\s*(\d+)\))");
    if (!std::regex_search(header, m, shape_re)) {
        throw format_error(path.string() + ": expected a rank-3 shape");
    }
    LinearImage img(std::stoi(m[2]), std::stoi(m[1]), std::stoi(m[3]));
    for (auto& v : img.data) v = io::read_le<float>(is, "npy payload");
    return img;
}

} // namespace diffuseraw
