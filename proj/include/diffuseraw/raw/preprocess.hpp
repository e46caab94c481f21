#pragma once

// RAW conditioning chain: pack the CFA mosaic into four half-resolution
// planes, subtract the black level, amplify, and bicubic-upsample back to the
// sensor resolution.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "diffuseraw/error.hpp"
#include "diffuseraw/image.hpp"
#include "diffuseraw/raw/bayer.hpp"

namespace diffuseraw {

inline PackedRaw pack_bayer(const BayerImage& img) {
    if (img.width % 2 != 0 || img.height % 2 != 0) {
        throw dimension_error("pack_bayer: odd dimensions " + std::to_string(img.height) + "x" +
                              std::to_string(img.width));
    }
    img.validate();
    PackedRaw out(img.width / 2, img.height / 2);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    out.at(y, x, packed_channel_at(img.pattern, dy, dx)) =
                        static_cast<float>(img.at(2 * y + dy, 2 * x + dx));
                }
            }
        }
    }
    return out;
}

// Inverse of pack_bayer for packed data that still holds integral DN values.
inline BayerImage remosaic(const PackedRaw& p, cfa_pattern pattern,
                           std::uint16_t black_level = 0, std::uint16_t white_level = 65535) {
    if (p.width <= 0 || p.height <= 0 ||
        p.data.size() != static_cast<std::size_t>(p.width) * p.height * 4) {
        throw dimension_error("remosaic: packed buffer does not match " +
                              std::to_string(p.height) + "x" + std::to_string(p.width) + "x4");
    }
    BayerImage out(p.width * 2, p.height * 2, pattern, black_level, white_level);
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    float v = p.at(y, x, packed_channel_at(pattern, dy, dx));
                    v = std::clamp(v, 0.0f, 65535.0f);
                    out.at(2 * y + dy, 2 * x + dx) = static_cast<std::uint16_t>(std::lround(v));
                }
            }
        }
    }
    return out;
}

// out = alpha * max(dn - black, 0) / (white - black). No upper clamp.
inline PackedRaw normalize_amplify(const PackedRaw& p, double black_level, double white_level,
                                   double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw parameter_error("normalize_amplify: alpha must be positive, got " +
                              std::to_string(alpha));
    }
    if (!(black_level < white_level)) {
        throw parameter_error("normalize_amplify: black_level must be below white_level");
    }
    PackedRaw out = p;
    const double range = white_level - black_level;
    for (auto& v : out.data) {
        double above = std::max(static_cast<double>(v) - black_level, 0.0);
        v = static_cast<float>(alpha * above / range);
    }
    out.amplification = p.amplification * alpha;
    return out;
}

// Catmull-Rom cubic convolution kernel (a = -0.5).
inline double cubic_kernel(double x, double a = -0.5) {
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

namespace detail {

struct cubic_taps {
    std::array<int, 4> index;
    std::array<double, 4> weight;
};

// Half-pixel centres: src = (dst + 0.5) / factor - 0.5. Taps clamp to the edge.
inline std::vector<cubic_taps> cubic_taps_for(int src_len, int dst_len) {
    std::vector<cubic_taps> taps(static_cast<std::size_t>(dst_len));
    const double scale = static_cast<double>(src_len) / dst_len;
    for (int d = 0; d < dst_len; ++d) {
        double s = (d + 0.5) * scale - 0.5;
        int base = static_cast<int>(std::floor(s));
        for (int k = 0; k < 4; ++k) {
            int i = base - 1 + k;
            taps[d].index[k] = std::clamp(i, 0, src_len - 1);
            taps[d].weight[k] = cubic_kernel(s - i);
        }
    }
    return taps;
}

} // namespace detail

// Separable bicubic resize of an interleaved image.
inline LinearImage bicubic_resize(const LinearImage& src, int out_w, int out_h) {
    if (src.width <= 0 || src.height <= 0 || src.empty()) {
        throw dimension_error("bicubic_resize: empty input");
    }
    if (out_w <= 0 || out_h <= 0) {
        throw dimension_error("bicubic_resize: empty output " + std::to_string(out_h) + "x" +
                              std::to_string(out_w));
    }
    const int c = src.channels;
    const auto xt = detail::cubic_taps_for(src.width, out_w);
    const auto yt = detail::cubic_taps_for(src.height, out_h);

    // Horizontal pass kept in double to avoid an intermediate rounding step.
    std::vector<double> horiz(static_cast<std::size_t>(src.height) * out_w * c, 0.0);
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < out_w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) acc += xt[x].weight[k] * src.at(y, xt[x].index[k], ch);
                horiz[(static_cast<std::size_t>(y) * out_w + x) * c + ch] = acc;
            }
        }
    }
    LinearImage out(out_w, out_h, c, src.space);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) {
                    acc += yt[y].weight[k] *
                           horiz[(static_cast<std::size_t>(yt[y].index[k]) * out_w + x) * c + ch];
                }
                out.at(y, x, ch) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

inline LinearImage to_linear_image(const PackedRaw& p) {
    LinearImage img(p.width, p.height, 4);
    img.data = p.data;
    return img;
}

inline LinearImage bicubic_upsample(const PackedRaw& p, int factor = 2) {
    if (p.width <= 0 || p.height <= 0 || p.data.empty()) {
        throw dimension_error("bicubic_upsample: empty input");
    }
    if (factor < 1) throw parameter_error("bicubic_upsample: factor must be >= 1");
    return bicubic_resize(to_linear_image(p), p.width * factor, p.height * factor);
}

// pack -> normalize/amplify -> bicubic x2: the model's image conditioning.
inline LinearImage preprocess_raw(const BayerImage& img, double alpha) {
    auto packed = pack_bayer(img);
    auto amplified = normalize_amplify(packed, img.black_level, img.white_level, alpha);
    return bicubic_upsample(amplified, 2);
}

} // namespace diffuseraw
