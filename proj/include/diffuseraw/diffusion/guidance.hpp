#pragma once

// Classifier-free guidance with one or two conditioning signals.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "diffuseraw/error.hpp"

namespace diffuseraw::diffusion {

struct GuidanceConfig {
    double s_I = 1.0;  // image guidance scale
    double s_T = 0.0;  // text guidance scale

    void validate() const {
        if (!std::isfinite(s_I) || !std::isfinite(s_T) || s_I < 0.0 || s_T < 0.0) {
            throw parameter_error("guidance scales must be finite and >= 0 (s_I=" + std::to_string(s_I) +
                                  ", s_T=" + std::to_string(s_T) + ")");
        }
    }

    // Denoiser passes needed per reverse step.
    int passes() const {
        if (s_T != 0.0) return 3;
        if (s_I != 0.0) return 2;
        return 1;
    }
};

namespace detail {

inline void require_same_length(const char* op, std::size_t a, std::size_t b) {
    if (a != b) {
        throw dimension_error(std::string(op) + ": operand sizes " + std::to_string(a) + " and " +
                              std::to_string(b) + " differ");
    }
}

} // namespace detail

// e_uncond + s (e_cond - e_uncond)
template <typename T>
std::vector<T> cfg_single(std::span<const T> e_cond, std::span<const T> e_uncond, double s) {
    detail::require_same_length("cfg_single", e_cond.size(), e_uncond.size());
    const T st = static_cast<T>(s);
    std::vector<T> out(e_cond.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = e_uncond[i] + st * (e_cond[i] - e_uncond[i]);
    return out;
}

// e_uu + s_I (e_Iu - e_uu) + s_T (e_IT - e_Iu)
template <typename T>
std::vector<T> cfg_dual(std::span<const T> e_uu, std::span<const T> e_Iu, std::span<const T> e_IT, double s_I,
                        double s_T) {
    detail::require_same_length("cfg_dual", e_uu.size(), e_Iu.size());
    detail::require_same_length("cfg_dual", e_uu.size(), e_IT.size());
    const T si = static_cast<T>(s_I);
    const T st = static_cast<T>(s_T);
    std::vector<T> out(e_uu.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = e_uu[i] + si * (e_Iu[i] - e_uu[i]) + st * (e_IT[i] - e_Iu[i]);
    }
    return out;
}

template <typename T>
std::vector<T> cfg_single(const std::vector<T>& e_cond, const std::vector<T>& e_uncond, double s) {
    return cfg_single<T>(std::span<const T>(e_cond), std::span<const T>(e_uncond), s);
}

template <typename T>
std::vector<T> cfg_dual(const std::vector<T>& e_uu, const std::vector<T>& e_Iu, const std::vector<T>& e_IT,
                        double s_I, double s_T) {
    return cfg_dual<T>(std::span<const T>(e_uu), std::span<const T>(e_Iu), std::span<const T>(e_IT), s_I, s_T);
}

} // namespace diffuseraw::diffusion
