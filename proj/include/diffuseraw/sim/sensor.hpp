#pragma once

// Shot + read noise sensor model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "diffuseraw/error.hpp"
#include "diffuseraw/random.hpp"
#include "diffuseraw/raw/bayer.hpp"

namespace diffuseraw::sim {

struct SensorNoiseParams {
    double full_well_photons = 10000.0;
    double read_noise_dn = 2.0;
    std::uint16_t black_level = 512;
    std::uint16_t white_level = 16383;
    std::uint64_t seed = 0;
    // Exposure time of a full (ratio 1) capture; short captures use
    // reference_exposure_s / ratio.
    double reference_exposure_s = 3.0;
    std::uint32_t iso = 100;

    void validate() const {
        if (!(full_well_photons > 0.0) || !std::isfinite(full_well_photons)) {
            throw parameter_error("SensorNoiseParams: full_well_photons must be positive");
        }
        if (!(read_noise_dn >= 0.0) || !std::isfinite(read_noise_dn)) {
            throw parameter_error("SensorNoiseParams: read_noise_dn must be non-negative");
        }
        if (black_level >= white_level) {
            throw parameter_error("SensorNoiseParams: black_level must be below white_level");
        }
        if (!(reference_exposure_s > 0.0)) {
            throw parameter_error("SensorNoiseParams: reference_exposure_s must be positive");
        }
    }

    double dn_per_photon() const { return (white_level - black_level) / full_well_photons; }
};

// photons ~ Poisson(rate * full_well * exposure_frac)
// dn = clip(black + photons * (white - black) / full_well + N(0, read_noise), 0, white)
inline BayerImage expose(const Mosaic& rates, double exposure_frac, const SensorNoiseParams& params,
                         std::uint64_t seed) {
    params.validate();
    if (!(exposure_frac > 0.0 && exposure_frac <= 1.0)) {
        throw parameter_error("expose: exposure_frac must lie in (0, 1], got " +
                              std::to_string(exposure_frac));
    }
    BayerImage img(rates.width, rates.height, rates.pattern, params.black_level, params.white_level);
    img.exposure_s = params.reference_exposure_s * exposure_frac;
    img.iso = params.iso;

    rng_t rng(mix_seed(seed));
    std::normal_distribution<double> read(0.0, 1.0);
    const double gain = params.dn_per_photon();
    for (std::size_t i = 0; i < rates.data.size(); ++i) {
        double mean = std::max(0.0, static_cast<double>(rates.data[i])) *
                      params.full_well_photons * exposure_frac;
        double photons = 0.0;
        if (mean > 0.0) {
            std::poisson_distribution<long long> shot(mean);
            photons = static_cast<double>(shot(rng));
        }
        double dn = params.black_level + photons * gain;
        if (params.read_noise_dn > 0.0) dn += params.read_noise_dn * read(rng);
        dn = std::clamp(std::round(dn), 0.0, static_cast<double>(params.white_level));
        img.data[i] = static_cast<std::uint16_t>(dn);
    }
    return img;
}

// Noise-free full exposure, quantized to DN. Source of the reference renders.
inline BayerImage expose_clean(const Mosaic& rates, const SensorNoiseParams& params) {
    params.validate();
    BayerImage img(rates.width, rates.height, rates.pattern, params.black_level, params.white_level);
    img.exposure_s = params.reference_exposure_s;
    img.iso = params.iso;
    const double range = static_cast<double>(params.white_level) - params.black_level;
    for (std::size_t i = 0; i < rates.data.size(); ++i) {
        double dn = params.black_level + std::clamp<double>(rates.data[i], 0.0, 1.0) * range;
        img.data[i] = static_cast<std::uint16_t>(std::round(dn));
    }
    return img;
}

} // namespace diffuseraw::sim
