#pragma once

// Strided ancestral DDPM sampling with dual classifier-free guidance.

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "diffuseraw/diffusion/data.hpp"
#include "diffuseraw/diffusion/guidance.hpp"
#include "diffuseraw/diffusion/model.hpp"
#include "diffuseraw/diffusion/schedule.hpp"
#include "diffuseraw/error.hpp"
#include "diffuseraw/image.hpp"
#include "diffuseraw/random.hpp"

namespace diffuseraw::diffusion {

inline constexpr int default_sampling_steps = 50;

// Runs the reverse chain from z (the sample at t = T) down to t = 0 over
// `steps` strided timesteps. eps_fn(z, t) returns the (guided) noise
// estimate. When noise_rng is null no noise is injected between steps.
template <typename T, typename EpsFn>
std::vector<T> reverse_chain(const NoiseSchedule& schedule, std::vector<T> z, int steps, EpsFn&& eps_fn,
                             rng_t* noise_rng) {
    const auto ts = schedule.strided(steps);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int i = steps - 1; i >= 0; --i) {
        const int t = ts[i];
        const int t_prev = i > 0 ? ts[i - 1] : 0;
        const double ab = schedule.alpha_bar(t);
        const double ab_prev = schedule.alpha_bar(t_prev);
        const double beta = 1.0 - ab / ab_prev;
        const double c_x0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
        const double c_z = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
        const double sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));

        const std::vector<T> eps = eps_fn(std::as_const(z), t);
        if (eps.size() != z.size()) {
            throw dimension_error("reverse_chain: noise estimate has " + std::to_string(eps.size()) +
                                  " values, latent " + std::to_string(z.size()));
        }
        for (std::size_t k = 0; k < z.size(); ++k) {
            const double x0 = (z[k] - std::sqrt(1.0 - ab) * eps[k]) / std::sqrt(ab);
            double next = c_x0 * x0 + c_z * z[k];
            if (noise_rng && t_prev > 0) next += sigma * nd(*noise_rng);
            z[k] = static_cast<T>(next);
        }
    }
    return z;
}

// Guided noise estimate from one batched denoiser call over the passes that
// the guidance scales require.
template <typename T>
std::vector<T> guided_eps(const LatentDiffusion<T>& model, const nn::Tensor<T>& z_t, const nn::Tensor<T>& cond_latent,
                          int t, int prompt, const GuidanceConfig& g) {
    const int passes = g.passes();
    const std::size_t n = z_t.numel();
    std::vector<T> z(n * passes), cond(n * passes, T(0));
    std::vector<int> prompts;
    for (int p = 0; p < passes; ++p) std::copy(z_t.values().begin(), z_t.values().end(), z.begin() + p * n);
    // pass 0: (null image, null prompt); pass 1: (image, null prompt); pass 2: (image, prompt)
    prompts.push_back(null_prompt);
    for (int p = 1; p < passes; ++p) {
        std::copy(cond_latent.values().begin(), cond_latent.values().end(), cond.begin() + p * n);
        prompts.push_back(p == 2 ? prompt : null_prompt);
    }
    auto shape = z_t.shape();
    shape[0] = passes;
    nn::no_grad_guard ng;
    auto e = model.denoise(nn::Tensor<T>(shape, std::move(z)), nn::Tensor<T>(shape, std::move(cond)),
                           std::vector<int>(passes, t), prompts);
    const auto& v = e.values();
    std::span<const T> e_uu(v.data(), n);
    if (passes == 1) return std::vector<T>(e_uu.begin(), e_uu.end());
    std::span<const T> e_Iu(v.data() + n, n);
    std::span<const T> e_IT = passes == 3 ? std::span<const T>(v.data() + 2 * n, n) : e_Iu;
    return cfg_dual<T>(e_uu, e_Iu, e_IT, g.s_I, g.s_T);
}

struct SampleOptions {
    GuidanceConfig guidance;
    int steps = default_sampling_steps;
    std::uint64_t seed = 0;
    int prompt = 1;
};

namespace detail {

template <typename T>
LinearImage sample_impl(const LatentDiffusion<T>& model, const LinearImage* c_I, int width, int height,
                        const SampleOptions& opt) {
    model.require_loaded();
    opt.guidance.validate();
    if (opt.prompt < 0 || opt.prompt >= model.config().vocab) {
        throw parameter_error("prompt id " + std::to_string(opt.prompt) + " outside vocabulary");
    }
    const nn::Shape img_shape{1, model.config().image_channels, height, width};
    if (width <= 0 || height <= 0 || width % ModelConfig::spatial_multiple || height % ModelConfig::spatial_multiple) {
        throw dimension_error("sample: image " + std::to_string(height) + "x" + std::to_string(width) +
                              " must have sides that are positive multiples of " +
                              std::to_string(ModelConfig::spatial_multiple));
    }
    const auto lshape = model.latent_shape(img_shape);

    nn::Tensor<T> cond_latent;
    {
        nn::no_grad_guard ng;
        if (c_I) {
            if (c_I->channels != model.config().cond_channels) {
                throw dimension_error("sample: conditioning image is " + c_I->shape_string() + ", expected " +
                                      std::to_string(model.config().cond_channels) + " channels");
            }
            cond_latent = model.condition(image_to_tensor<T>(*c_I));
        } else {
            cond_latent = nn::Tensor<T>::zeros(lshape);
        }
    }

    rng_t init_rng(derive_seed(opt.seed, 1));
    rng_t noise_rng(derive_seed(opt.seed, 2));
    auto z = nn::Tensor<T>::randn(lshape, init_rng).values();
    auto eps_fn = [&](const std::vector<T>& zt, int t) {
        return guided_eps(model, nn::Tensor<T>(lshape, zt), cond_latent, t, opt.prompt, opt.guidance);
    };
    z = reverse_chain<T>(model.schedule(), std::move(z), opt.steps, eps_fn, &noise_rng);

    nn::no_grad_guard ng;
    auto x = model.decode(nn::Tensor<T>(lshape, std::move(z)));
    auto img = tensor_to_image(x, 0, colorspace::srgb);
    for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
    return img;
}

} // namespace detail

// Generates an sRGB image conditioned on a preprocessed RAW image (H x W x 4).
template <typename T>
LinearImage sample(const LatentDiffusion<T>& model, const LinearImage& c_I, const SampleOptions& opt) {
    return detail::sample_impl(model, &c_I, c_I.width, c_I.height, opt);
}

// Same with the null image condition in place of a RAW input.
template <typename T>
LinearImage sample_null_image(const LatentDiffusion<T>& model, int width, int height, const SampleOptions& opt) {
    return detail::sample_impl<T>(model, nullptr, width, height, opt);
}

} // namespace diffuseraw::diffusion
