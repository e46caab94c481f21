#pragma once

// Full-reference image quality: PSNR and SSIM on [0, max_val] data.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "diffuseraw/error.hpp"
#include "diffuseraw/image.hpp"

namespace diffuseraw::metrics {

// Reported PSNR for identical images.
inline constexpr double psnr_cap_db = 100.0;

template <typename T>
double mse(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size() || a.empty()) {
        throw dimension_error("mse: sizes " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

// 10 log10(max_val^2 / MSE); infinity when MSE is zero.
template <typename T>
double psnr_raw(std::span<const T> a, std::span<const T> b, double max_val = 1.0) {
    if (!(max_val > 0)) throw parameter_error("psnr: max_val must be positive");
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_val * max_val / m);
}

// PSNR capped at psnr_cap_db (the value used in reports).
template <typename T>
double psnr(std::span<const T> a, std::span<const T> b, double max_val = 1.0) {
    return std::min(psnr_raw(a, b, max_val), psnr_cap_db);
}

inline void require_same_shape(const char* op, const LinearImage& a, const LinearImage& b) {
    if (!a.same_shape(b)) {
        throw dimension_error(std::string(op) + ": shapes " + a.shape_string() + " and " + b.shape_string() + " differ");
    }
}

inline double psnr(const LinearImage& a, const LinearImage& b, double max_val = 1.0) {
    require_same_shape("psnr", a, b);
    return psnr(std::span<const float>(a.data), std::span<const float>(b.data), max_val);
}

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    double s = 0;
    for (int i = 0; i < size; ++i) {
        w[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
        s += w[i];
    }
    for (auto& v : w) v /= s;
    return w;
}

// Separable weighted filter, valid region only: (h-k+1) x (w-k+1).
inline std::vector<double> filter_valid(const std::vector<double>& img, int w, int h, const std::vector<double>& k) {
    const int ks = static_cast<int>(k.size());
    const int ow = w - ks + 1, oh = h - ks + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0;
            for (int i = 0; i < ks; ++i) acc += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0;
            for (int i = 0; i < ks; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    return out;
}

} // namespace detail

// Mean SSIM of two single-channel w x h planes over Gaussian-weighted windows.
template <typename T>
double ssim_plane(std::span<const T> a, std::span<const T> b, int w, int h, const SsimParams& p = {}) {
    if (a.size() != b.size() || a.size() != static_cast<std::size_t>(w) * h) {
        throw dimension_error("ssim: plane sizes do not match " + std::to_string(h) + "x" + std::to_string(w));
    }
    if (w < p.window || h < p.window) {
        throw dimension_error("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " smaller than the " +
                              std::to_string(p.window) + "x" + std::to_string(p.window) + " window");
    }
    const auto k = detail::gaussian_window(p.window, p.sigma);
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end()), xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = detail::filter_valid(x, w, h, k), my = detail::filter_valid(y, w, h, k);
    const auto sxx = detail::filter_valid(xx, w, h, k), syy = detail::filter_valid(yy, w, h, k),
               sxy = detail::filter_valid(xy, w, h, k);
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    double acc = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
        acc += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return acc / static_cast<double>(mx.size());
}

// Luminance as the per-pixel channel mean.
inline std::vector<double> channel_mean(const LinearImage& img) {
    std::vector<double> out(static_cast<std::size_t>(img.width) * img.height);
    for (std::size_t p = 0; p < out.size(); ++p) {
        double s = 0;
        for (int c = 0; c < img.channels; ++c) s += img.data[p * img.channels + c];
        out[p] = s / img.channels;
    }
    return out;
}

inline double ssim(const LinearImage& a, const LinearImage& b, const SsimParams& p = {}) {
    require_same_shape("ssim", a, b);
    const auto la = channel_mean(a), lb = channel_mean(b);
    return ssim_plane(std::span<const double>(la), std::span<const double>(lb), a.width, a.height, p);
}

} // namespace diffuseraw::metrics
