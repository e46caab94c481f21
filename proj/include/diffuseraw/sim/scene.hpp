#pragma once

// Procedural test scenes in linear camera RGB, values in [0, 1].

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "diffuseraw/error.hpp"
#include "diffuseraw/image.hpp"
#include "diffuseraw/random.hpp"
#include "diffuseraw/raw/bayer.hpp"

namespace diffuseraw::sim {

namespace detail {

inline double smoothstep01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

} // namespace detail

// Smooth four-corner gradient, a handful of anti-aliased rectangles and
// disks, some of them carrying a low-contrast sinusoidal texture.
inline LinearImage synthesize_scene(int width, int height, std::uint64_t seed) {
    if (width <= 0 || height <= 0 || width % 2 || height % 2) {
        throw dimension_error("synthesize_scene: dimensions must be positive and even, got " +
                              std::to_string(height) + "x" + std::to_string(width));
    }
    rng_t rng(mix_seed(seed));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

    std::array<std::array<double, 3>, 4> corner{};
    for (auto& c : corner) {
        for (auto& v : c) v = uni(0.04, 0.40);
    }

    LinearImage img(width, height, 3, colorspace::linear);
    for (int y = 0; y < height; ++y) {
        double fy = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
        for (int x = 0; x < width; ++x) {
            double fx = width > 1 ? static_cast<double>(x) / (width - 1) : 0.0;
            for (int c = 0; c < 3; ++c) {
                double top = corner[0][c] * (1 - fx) + corner[1][c] * fx;
                double bot = corner[2][c] * (1 - fx) + corner[3][c] * fx;
                img.at(y, x, c) = static_cast<float>(top * (1 - fy) + bot * fy);
            }
        }
    }

    const int shapes = 4 + static_cast<int>(u01(rng) * 6.0);
    const double size = std::min(width, height);
    for (int s = 0; s < shapes; ++s) {
        const bool disk = u01(rng) < 0.5;
        const double cx = uni(0.0, width), cy = uni(0.0, height);
        const double rx = uni(0.08, 0.30) * size, ry = uni(0.08, 0.30) * size;
        std::array<double, 3> color{uni(0.02, 0.55), uni(0.02, 0.55), uni(0.02, 0.55)};
        const bool textured = u01(rng) < 0.4;
        const double theta = uni(0.0, std::numbers::pi);
        const double period = uni(6.0, 14.0);
        const double amp = uni(0.08, 0.20);

        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                double inside;  // signed distance in pixels, positive inside
                if (disk) {
                    double r = std::min(rx, ry);
                    inside = r - std::hypot(px - cx, py - cy);
                } else {
                    inside = std::min(rx - std::abs(px - cx), ry - std::abs(py - cy));
                }
                double cover = detail::smoothstep01(inside + 0.5);
                if (cover <= 0.0) continue;
                double tex = 1.0;
                if (textured) {
                    double phase = (px * std::cos(theta) + py * std::sin(theta)) / period;
                    tex = 1.0 + amp * std::sin(2.0 * std::numbers::pi * phase);
                }
                for (int c = 0; c < 3; ++c) {
                    double v = img.at(y, x, c) * (1 - cover) + color[c] * tex * cover;
                    img.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
            }
        }
    }
    return img;
}

// Samples the scene at CFA sites, yielding a photon-rate mosaic.
inline Mosaic mosaic_scene(const LinearImage& scene, cfa_pattern pattern) {
    if (scene.channels != 3) {
        throw dimension_error("mosaic_scene: expected 3 channels, got " + std::to_string(scene.channels));
    }
    if (scene.width <= 0 || scene.height <= 0 || scene.width % 2 || scene.height % 2) {
        throw dimension_error("mosaic_scene: dimensions must be positive and even");
    }
    Mosaic m(scene.width, scene.height, pattern);
    for (int y = 0; y < scene.height; ++y) {
        for (int x = 0; x < scene.width; ++x) {
            m.at(y, x) = scene.at(y, x, cfa_color_at(pattern, y, x));
        }
    }
    return m;
}

} // namespace diffuseraw::sim
