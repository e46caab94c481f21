#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "diffuseraw/error.hpp"

namespace diffuseraw {

enum class colorspace { linear, srgb };

// Interleaved (row-major, channel-last) floating point image.
struct LinearImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    colorspace space = colorspace::linear;
    std::vector<float> data;

    LinearImage() = default;
    LinearImage(int w, int h, int c, colorspace cs = colorspace::linear, float fill = 0.0f)
        : width(w), height(h), channels(c), space(cs),
          data(static_cast<std::size_t>(w) * h * c, fill) {
        if (w < 0 || h < 0 || c <= 0) {
            throw dimension_error("LinearImage: invalid shape " + std::to_string(h) + "x" +
                                  std::to_string(w) + "x" + std::to_string(c));
        }
    }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    float& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    bool same_shape(const LinearImage& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    std::string shape_string() const {
        return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
    }

    bool all_finite() const {
        for (float v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }
};

} // namespace diffuseraw
