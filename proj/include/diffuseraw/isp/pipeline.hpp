#pragma once

// Classical reference pipeline: normalize -> exposure scale -> white balance
// -> bilinear demosaic -> color matrix -> clip -> sRGB encode.
//
// Denoising and sharpening are deliberately absent; this is a plain
// rendering reference, not a competitive ISP.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "diffuseraw/error.hpp"
#include "diffuseraw/image.hpp"
#include "diffuseraw/raw/bayer.hpp"

namespace diffuseraw::isp {

using Matrix3 = std::array<std::array<double, 3>, 3>;

inline constexpr Matrix3 identity_ccm{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

struct IspConfig {
    std::array<double, 3> wb_gains{2.0, 1.0, 1.6};
    Matrix3 ccm{{{1.6, -0.4, -0.2}, {-0.3, 1.5, -0.2}, {0.0, -0.5, 1.5}}};
    // When false, encode uses a pure power law v^(1/gamma).
    bool srgb_gamma = true;
    double gamma = 2.2;

    void validate() const {
        for (double g : wb_gains) {
            if (!(g > 0.0) || !std::isfinite(g)) {
                throw parameter_error("IspConfig: white balance gains must be positive");
            }
        }
        for (int r = 0; r < 3; ++r) {
            double sum = ccm[r][0] + ccm[r][1] + ccm[r][2];
            if (!std::isfinite(sum) || std::abs(sum - 1.0) > 1e-6) {
                throw parameter_error("IspConfig: ccm row " + std::to_string(r) +
                                      " sums to " + std::to_string(sum) + ", expected 1");
            }
        }
        if (!srgb_gamma && !(gamma > 0.0)) {
            throw parameter_error("IspConfig: gamma exponent must be positive");
        }
    }
};

inline void check_gains(const std::array<double, 3>& gains) {
    for (double g : gains) {
        if (!(g > 0.0) || !std::isfinite(g)) {
            throw parameter_error("white_balance: gains must be positive, got " + std::to_string(g));
        }
    }
}

// (dn - black) / (white - black), clamped below at zero.
inline Mosaic normalize_bayer(const BayerImage& img) {
    img.validate();
    Mosaic m(img.width, img.height, img.pattern);
    const double range = static_cast<double>(img.white_level) - img.black_level;
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        double v = (static_cast<double>(img.data[i]) - img.black_level) / range;
        m.data[i] = static_cast<float>(std::max(v, 0.0));
    }
    return m;
}

inline Mosaic white_balance(const Mosaic& m, const std::array<double, 3>& gains) {
    check_gains(gains);
    Mosaic out = m;
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            out.at(y, x) = static_cast<float>(m.at(y, x) * gains[cfa_color_at(m.pattern, y, x)]);
        }
    }
    return out;
}

inline LinearImage white_balance(const LinearImage& img, const std::array<double, 3>& gains) {
    check_gains(gains);
    if (img.channels != 3) {
        throw dimension_error("white_balance: expected 3 channels, got " + std::to_string(img.channels));
    }
    LinearImage out = img;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = static_cast<float>(img.data[i] * gains[i % 3]);
    }
    return out;
}

// Each missing color is the mean of the distinct same-color sites in the
// clamped 3x3 neighbourhood, which is the classic bilinear stencil in the
// interior.
inline LinearImage demosaic_bilinear(const Mosaic& m) {
    if (m.width <= 0 || m.height <= 0 || m.width % 2 || m.height % 2) {
        throw dimension_error("demosaic_bilinear: dimensions must be positive and even, got " +
                              std::to_string(m.height) + "x" + std::to_string(m.width));
    }
    LinearImage out(m.width, m.height, 3, colorspace::linear);
    for (int y = 0; y < m.height; ++y) {
        int ys[3] = {std::max(y - 1, 0), y, std::min(y + 1, m.height - 1)};
        int ny = 3;
        if (ys[0] == ys[1]) { ys[0] = ys[2]; ny = 2; }
        else if (ys[2] == ys[1]) { ny = 2; }
        for (int x = 0; x < m.width; ++x) {
            int xs[3] = {std::max(x - 1, 0), x, std::min(x + 1, m.width - 1)};
            int nx = 3;
            if (xs[0] == xs[1]) { xs[0] = xs[2]; nx = 2; }
            else if (xs[2] == xs[1]) { nx = 2; }

            const int own = cfa_color_at(m.pattern, y, x);
            double sum[3] = {0, 0, 0};
            int count[3] = {0, 0, 0};
            for (int i = 0; i < ny; ++i) {
                for (int j = 0; j < nx; ++j) {
                    int c = cfa_color_at(m.pattern, ys[i], xs[j]);
                    sum[c] += m.at(ys[i], xs[j]);
                    ++count[c];
                }
            }
            for (int c = 0; c < 3; ++c) {
                float v = c == own ? m.at(y, x)
                                   : static_cast<float>(count[c] ? sum[c] / count[c] : 0.0);
                out.at(y, x, c) = v;
            }
        }
    }
    return out;
}

inline LinearImage demosaic_bilinear(const BayerImage& img, bool normalized) {
    if (img.width % 2 || img.height % 2) {
        throw dimension_error("demosaic_bilinear: odd dimensions " + std::to_string(img.height) +
                              "x" + std::to_string(img.width));
    }
    if (normalized) return demosaic_bilinear(normalize_bayer(img));
    img.validate();
    Mosaic m(img.width, img.height, img.pattern);
    for (std::size_t i = 0; i < img.data.size(); ++i) m.data[i] = img.data[i];
    return demosaic_bilinear(m);
}

inline LinearImage apply_ccm(const LinearImage& img, const Matrix3& ccm) {
    if (img.channels != 3) {
        throw dimension_error("apply_ccm: expected 3 channels, got " + std::to_string(img.channels));
    }
    for (int r = 0; r < 3; ++r) {
        double sum = ccm[r][0] + ccm[r][1] + ccm[r][2];
        if (!std::isfinite(sum) || std::abs(sum - 1.0) > 1e-6) {
            throw parameter_error("apply_ccm: row " + std::to_string(r) + " sums to " +
                                  std::to_string(sum) + ", expected 1");
        }
    }
    LinearImage out = img;
    const std::size_t n = img.data.size() / 3;
    for (std::size_t p = 0; p < n; ++p) {
        const float* in = &img.data[p * 3];
        for (int r = 0; r < 3; ++r) {
            out.data[p * 3 + r] =
                static_cast<float>(ccm[r][0] * in[0] + ccm[r][1] * in[1] + ccm[r][2] * in[2]);
        }
    }
    return out;
}

inline double srgb_encode(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x <= 0.0031308 ? 12.92 * x : 1.055 * std::pow(x, 1.0 / 2.4) - 0.055;
}

inline double srgb_decode(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

enum class gamma_direction { encode, decode };

inline LinearImage gamma_srgb(const LinearImage& img, gamma_direction dir) {
    LinearImage out = img;
    for (auto& v : out.data) {
        v = static_cast<float>(dir == gamma_direction::encode ? srgb_encode(v) : srgb_decode(v));
    }
    out.space = dir == gamma_direction::encode ? colorspace::srgb : colorspace::linear;
    return out;
}

inline LinearImage gamma_power(const LinearImage& img, double gamma) {
    LinearImage out = img;
    for (auto& v : out.data) v = static_cast<float>(std::pow(std::clamp<double>(v, 0.0, 1.0), 1.0 / gamma));
    out.space = colorspace::srgb;
    return out;
}

inline LinearImage clip_unit(LinearImage img) {
    for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
    return img;
}

inline LinearImage run_pipeline(const Mosaic& normalized, const IspConfig& cfg, double exposure_scale) {
    cfg.validate();
    if (!(exposure_scale > 0.0) || !std::isfinite(exposure_scale)) {
        throw parameter_error("run_pipeline: exposure_scale must be positive");
    }
    Mosaic scaled = normalized;
    for (auto& v : scaled.data) v = static_cast<float>(v * exposure_scale);
    auto rgb = demosaic_bilinear(white_balance(scaled, cfg.wb_gains));
    rgb = clip_unit(apply_ccm(rgb, cfg.ccm));
    return cfg.srgb_gamma ? gamma_srgb(rgb, gamma_direction::encode) : gamma_power(rgb, cfg.gamma);
}

inline LinearImage run_pipeline(const BayerImage& img, const IspConfig& cfg, double exposure_scale) {
    return run_pipeline(normalize_bayer(img), cfg, exposure_scale);
}

} // namespace diffuseraw::isp
