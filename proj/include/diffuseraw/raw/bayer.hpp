#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "diffuseraw/error.hpp"

namespace diffuseraw {

// Numeric values are the on-disk codes of the .braw container.
enum class cfa_pattern : std::uint8_t { rggb = 0, bggr = 1, grbg = 2, gbrg = 3 };

inline constexpr std::array<cfa_pattern, 4> all_cfa_patterns{
    cfa_pattern::rggb, cfa_pattern::bggr, cfa_pattern::grbg, cfa_pattern::gbrg};

constexpr std::string_view to_string(cfa_pattern p) {
    switch (p) {
    case cfa_pattern::rggb: return "RGGB";
    case cfa_pattern::bggr: return "BGGR";
    case cfa_pattern::grbg: return "GRBG";
    case cfa_pattern::gbrg: return "GBRG";
    }
    return "?";
}

inline std::optional<cfa_pattern> parse_cfa_pattern(std::string_view s) {
    for (auto p : all_cfa_patterns) {
        if (to_string(p) == s) return p;
    }
    return std::nullopt;
}

// Packed channel order: R, Gr (green on red rows), B, Gb (green on blue rows).
enum packed_channel : int { ch_r = 0, ch_gr = 1, ch_b = 2, ch_gb = 3 };

// Packed channel sampled at tile offset (dy, dx) for the given pattern.
constexpr int packed_channel_at(cfa_pattern p, int dy, int dx) {
    // Rows are tile rows, columns tile columns, values packed channel.
    constexpr int table[4][2][2] = {
        {{ch_r, ch_gr}, {ch_gb, ch_b}},  // RGGB
        {{ch_b, ch_gb}, {ch_gr, ch_r}},  // BGGR
        {{ch_gr, ch_r}, {ch_b, ch_gb}},  // GRBG
        {{ch_gb, ch_b}, {ch_r, ch_gr}},  // GBRG
    };
    return table[static_cast<int>(p)][dy & 1][dx & 1];
}

// RGB color index (0=R, 1=G, 2=B) of the site at (y, x).
constexpr int cfa_color_at(cfa_pattern p, int y, int x) {
    switch (packed_channel_at(p, y, x)) {
    case ch_r: return 0;
    case ch_b: return 2;
    default: return 1;
    }
}

// Single-channel CFA mosaic in raw digital numbers.
struct BayerImage {
    int width = 0;
    int height = 0;
    cfa_pattern pattern = cfa_pattern::rggb;
    std::uint16_t black_level = 0;
    std::uint16_t white_level = 65535;
    std::vector<std::uint16_t> data;
    double exposure_s = 1.0;
    std::uint32_t iso = 100;

    BayerImage() = default;
    BayerImage(int w, int h, cfa_pattern p, std::uint16_t black, std::uint16_t white)
        : width(w), height(h), pattern(p), black_level(black), white_level(white),
          data(static_cast<std::size_t>(w) * h, 0) {}

    std::uint16_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint16_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }

    // Throws when the container breaks its invariants.
    void validate() const {
        if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0) {
            throw dimension_error("BayerImage: dimensions must be positive and even, got " +
                                  std::to_string(height) + "x" + std::to_string(width));
        }
        if (data.size() != static_cast<std::size_t>(width) * height) {
            throw dimension_error("BayerImage: sample count " + std::to_string(data.size()) +
                                  " does not match " + std::to_string(height) + "x" +
                                  std::to_string(width));
        }
        if (black_level >= white_level) {
            throw parameter_error("BayerImage: black_level " + std::to_string(black_level) +
                                  " must be below white_level " + std::to_string(white_level));
        }
        for (auto v : data) {
            if (v > white_level) {
                throw parameter_error("BayerImage: sample " + std::to_string(v) +
                                      " exceeds white_level " + std::to_string(white_level));
            }
        }
    }
};

// Four-channel half-resolution image, channel order R, Gr, B, Gb, interleaved.
// Holds raw DN right after packing and normalized linear values after
// normalize_amplify.
struct PackedRaw {
    static constexpr int channels = 4;

    int width = 0;
    int height = 0;
    std::vector<float> data;
    double amplification = 1.0;

    PackedRaw() = default;
    PackedRaw(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 4, 0.0f) {}

    float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 4 + c]; }
    float at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 4 + c];
    }
};

// Float CFA plane. Used for photon-rate mosaics and for normalized,
// white-balanced data inside the classical pipeline.
struct Mosaic {
    int width = 0;
    int height = 0;
    cfa_pattern pattern = cfa_pattern::rggb;
    std::vector<float> data;

    Mosaic() = default;
    Mosaic(int w, int h, cfa_pattern p)
        : width(w), height(h), pattern(p), data(static_cast<std::size_t>(w) * h, 0.0f) {}

    float& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

} // namespace diffuseraw
