#pragma once

// Noise-prediction objective with conditioning dropout.
//
// The model type needs: schedule(), latent_shape(image_shape), encode(x),
// condition(c, keep), denoise(z_t, cond_latent, timesteps, prompts).

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "diffuseraw/diffusion/text.hpp"
#include "diffuseraw/error.hpp"
#include "diffuseraw/nn/ops.hpp"
#include "diffuseraw/random.hpp"

namespace diffuseraw::diffusion {

enum class dropout_kind { none, text, both };

struct DropoutConfig {
    double text_only = 0.05;  // c_T -> null prompt
    double both = 0.05;       // c_I -> null image and c_T -> null prompt

    void validate() const {
        if (text_only < 0 || both < 0 || text_only + both > 1) {
            throw parameter_error("dropout probabilities must be >= 0 and sum to at most 1");
        }
    }
};

// One uniform draw per example partitions [0,1) into text-only / both / none.
inline dropout_kind draw_dropout(rng_t& rng, const DropoutConfig& cfg) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (u < cfg.text_only) return dropout_kind::text;
    if (u < cfg.text_only + cfg.both) return dropout_kind::both;
    return dropout_kind::none;
}

template <typename T>
struct LossResult {
    nn::Tensor<T> loss;
    std::vector<int> timesteps;
    std::vector<dropout_kind> dropout;
};

// MSE between eps and the model's prediction at fixed timesteps and noise.
// keep_image[n] = 0 and prompts[n] = null_prompt realize the null conditions.
template <typename Model, typename T>
nn::Tensor<T> denoising_loss(const Model& model, const nn::Tensor<T>& x_ref, const nn::Tensor<T>& c_I,
                             const std::vector<int>& prompts, const std::vector<int>& ts,
                             const nn::Tensor<T>& eps, const std::vector<T>& keep_image) {
    nn::Tensor<T> z0;
    {
        nn::no_grad_guard ng;
        z0 = model.encode(x_ref);
    }
    if (eps.shape() != z0.shape()) {
        throw dimension_error("noise " + nn::shape_string(eps.shape()) + " vs latent " + nn::shape_string(z0.shape()));
    }
    const auto N = static_cast<std::size_t>(z0.dim(0));
    if (ts.size() != N) throw dimension_error("denoising_loss: timestep count does not match batch");
    const std::size_t per = z0.numel() / N;
    std::vector<T> zt(z0.numel());
    for (std::size_t n = 0; n < N; ++n) {
        const double ab = model.schedule().alpha_bar(ts[n]);
        const T a = static_cast<T>(std::sqrt(ab)), s = static_cast<T>(std::sqrt(1.0 - ab));
        for (std::size_t i = n * per; i < (n + 1) * per; ++i) zt[i] = a * z0.values()[i] + s * eps.values()[i];
    }
    nn::Tensor<T> z_t(z0.shape(), std::move(zt));
    auto pred = model.denoise(z_t, model.condition(c_I, keep_image), ts, prompts);
    return nn::mse_loss(pred, eps);
}

// Samples t ~ U{1..T}, eps ~ N(0, I) and the conditioning dropout per example.
template <typename Model, typename T>
LossResult<T> training_loss(const Model& model, const nn::Tensor<T>& x_ref, const nn::Tensor<T>& c_I,
                            std::vector<int> prompts, rng_t& rng, const DropoutConfig& dropout = {}) {
    dropout.validate();
    if (x_ref.rank() != 4 || c_I.rank() != 4 || x_ref.dim(0) != c_I.dim(0) || x_ref.dim(2) != c_I.dim(2) ||
        x_ref.dim(3) != c_I.dim(3)) {
        throw dimension_error("training_loss: reference " + nn::shape_string(x_ref.shape()) +
                              " and conditioning " + nn::shape_string(c_I.shape()) + " do not cover the same patch");
    }
    const auto N = static_cast<std::size_t>(x_ref.dim(0));
    if (prompts.size() != N) throw dimension_error("training_loss: prompt count does not match batch");

    LossResult<T> r;
    std::uniform_int_distribution<int> tdist(1, model.schedule().steps());
    std::vector<T> keep(N, T(1));
    for (std::size_t n = 0; n < N; ++n) {
        r.timesteps.push_back(tdist(rng));
        const auto kind = draw_dropout(rng, dropout);
        r.dropout.push_back(kind);
        if (kind != dropout_kind::none) prompts[n] = null_prompt;
        if (kind == dropout_kind::both) keep[n] = T(0);
    }
    auto eps = nn::Tensor<T>::randn(model.latent_shape(x_ref.shape()), rng);
    r.loss = denoising_loss(model, x_ref, c_I, prompts, r.timesteps, eps, keep);
    return r;
}

} // namespace diffuseraw::diffusion
