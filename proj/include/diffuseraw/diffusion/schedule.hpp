#pragma once

// DDPM noise schedule and the closed-form forward process q(z_t | z_0).
// Timesteps are 1-based: t in [1, T].

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "diffuseraw/error.hpp"

namespace diffuseraw::diffusion {

class NoiseSchedule {
public:
    // Linear betas from beta_start to beta_end over T steps.
    explicit NoiseSchedule(int T = 1000, double beta_start = 1e-4, double beta_end = 2e-2) {
        if (T < 1) throw parameter_error("NoiseSchedule: T must be >= 1, got " + std::to_string(T));
        if (!(beta_start > 0.0) || !(beta_end >= beta_start) || !(beta_end < 1.0)) {
            throw parameter_error("NoiseSchedule: need 0 < beta_start <= beta_end < 1");
        }
        betas_.resize(T);
        alphas_.resize(T);
        alpha_bar_.resize(T);
        double prod = 1.0;
        for (int i = 0; i < T; ++i) {
            const double frac = T == 1 ? 0.0 : static_cast<double>(i) / (T - 1);
            betas_[i] = beta_start + (beta_end - beta_start) * frac;
            alphas_[i] = 1.0 - betas_[i];
            prod *= alphas_[i];
            alpha_bar_[i] = prod;
        }
    }

    int steps() const { return static_cast<int>(betas_.size()); }

    double beta(int t) const { return betas_[index(t)]; }
    double alpha(int t) const { return alphas_[index(t)]; }
    // alpha_bar(0) == 1 (clean sample) so the reverse chain can step to t=0.
    double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_[index(t)]; }

    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bar_; }

    void check_timestep(int t) const {
        if (t < 1 || t > steps()) {
            throw parameter_error("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
        }
    }

    // Evenly strided subsequence of `count` timesteps, ascending, ending at T.
    std::vector<int> strided(int count) const {
        if (count < 1 || count > steps()) {
            throw parameter_error("strided: step count " + std::to_string(count) + " outside [1, " +
                                  std::to_string(steps()) + "]");
        }
        std::vector<int> ts(count);
        for (int i = 1; i <= count; ++i) {
            ts[i - 1] = static_cast<int>(std::lround(static_cast<double>(i) * steps() / count));
        }
        return ts;
    }

private:
    std::size_t index(int t) const {
        check_timestep(t);
        return static_cast<std::size_t>(t - 1);
    }

    std::vector<double> betas_, alphas_, alpha_bar_;
};

// z_t = sqrt(alpha_bar[t]) z0 + sqrt(1 - alpha_bar[t]) eps
template <typename T>
void forward_diffuse(std::span<const T> z0, int t, std::span<const T> eps, const NoiseSchedule& schedule,
                     std::span<T> out) {
    if (z0.size() != eps.size() || z0.size() != out.size()) {
        throw dimension_error("forward_diffuse: z0 has " + std::to_string(z0.size()) + " values, eps " +
                              std::to_string(eps.size()) + ", output " + std::to_string(out.size()));
    }
    schedule.check_timestep(t);
    const double ab = schedule.alpha_bar(t);
    const T a = static_cast<T>(std::sqrt(ab));
    const T s = static_cast<T>(std::sqrt(1.0 - ab));
    for (std::size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + s * eps[i];
}

template <typename T>
std::vector<T> forward_diffuse(const std::vector<T>& z0, int t, const std::vector<T>& eps,
                               const NoiseSchedule& schedule) {
    std::vector<T> out(z0.size());
    forward_diffuse<T>(std::span<const T>(z0), t, std::span<const T>(eps), schedule, std::span<T>(out));
    return out;
}

} // namespace diffuseraw::diffusion
