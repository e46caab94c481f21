#pragma once

// Two-stage desk-scale training: autoencoder reconstruction pretraining, then
// the conditional noise-prediction objective with the autoencoder frozen.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "diffuseraw/diffusion/data.hpp"
#include "diffuseraw/diffusion/loss.hpp"
#include "diffuseraw/diffusion/model.hpp"
#include "diffuseraw/error.hpp"
#include "diffuseraw/nn/optim.hpp"
#include "diffuseraw/random.hpp"

namespace diffuseraw::diffusion {

struct AutoencoderTrainConfig {
    int steps = 2000;
    int batch = 8;
    double lr = 3e-3;
    long warmup = 50;
};

struct TrainConfig {
    ModelConfig model;
    AutoencoderTrainConfig autoencoder;
    int patch = 64;
    int batch = 16;
    int steps = 2000;
    double lr = 5e-5;
    long warmup = 500;
    double weight_decay = 1e-2;
    DropoutConfig dropout;
    int checkpoint_every = 500;  // 0 disables periodic checkpoints
    int val_every = 100;
    int val_size = 16;
    std::uint64_t seed = 1;

    void validate() const {
        model.validate();
        dropout.validate();
        if (patch <= 0 || patch % ModelConfig::spatial_multiple) {
            throw parameter_error("patch must be a positive multiple of " +
                                  std::to_string(ModelConfig::spatial_multiple) + ", got " + std::to_string(patch));
        }
        if (batch <= 0 || steps < 0 || val_size <= 0 || val_every <= 0 || checkpoint_every < 0) {
            throw parameter_error("batch, val_size and val_every must be positive; steps and checkpoint_every >= 0");
        }
        if (autoencoder.steps < 0 || autoencoder.batch <= 0 || !(autoencoder.lr > 0) || autoencoder.warmup < 0) {
            throw parameter_error("invalid autoencoder training settings");
        }
        if (!(lr > 0) || warmup < 0 || weight_decay < 0) throw parameter_error("invalid optimizer settings");
    }
};

// Fixed crops, timesteps and noise with full conditioning.
struct ValidationBatch {
    PatchBatch batch;
    std::vector<int> timesteps;
    nn::Tensor<float> eps;
};

inline ValidationBatch make_validation_batch(const PairDataset& ds, const LatentDiffusion<float>& model,
                                             const TrainConfig& cfg) {
    rng_t rng(derive_seed(cfg.seed, 0x76616cULL));
    ValidationBatch v;
    v.batch = random_batch(ds, cfg.val_size, cfg.patch, rng, /*augment=*/false);
    std::uniform_int_distribution<int> tdist(1, model.schedule().steps());
    for (int n = 0; n < cfg.val_size; ++n) v.timesteps.push_back(tdist(rng));
    v.eps = nn::Tensor<float>::randn(model.latent_shape(v.batch.reference.shape()), rng);
    return v;
}

inline double validation_loss(const LatentDiffusion<float>& model, const ValidationBatch& v) {
    nn::no_grad_guard ng;
    std::vector<float> keep(v.timesteps.size(), 1.0f);
    return denoising_loss(model, v.batch.reference, v.batch.cond, v.batch.prompts, v.timesteps, v.eps, keep).item();
}

struct TrainResult {
    LatentDiffusion<float> model;
    double autoencoder_loss = 0.0;               // final reconstruction MSE
    std::vector<std::pair<int, double>> losses;  // (step, training loss)
    std::vector<std::pair<int, double>> validation;
    std::vector<std::filesystem::path> checkpoints;
};

using ProgressFn = std::function<void(const std::string&)>;

inline std::string checkpoint_name(int step) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "ckpt_%06d.drck", step);
    return buf;
}

// Reconstruction MSE on reference crops; returns the last batch loss.
inline double train_autoencoder(LatentDiffusion<float>& model, const PairDataset& ds, const TrainConfig& cfg,
                                const ProgressFn& progress) {
    const auto& ac = cfg.autoencoder;
    nn::AdamConfig adam;
    adam.weight_decay = 0.0;
    adam.schedule = {ac.lr, ac.warmup, ac.steps};
    nn::AdamW<float> opt(model.autoencoder_parameters(), adam);
    rng_t rng(derive_seed(cfg.seed, 0x6165ULL));
    double last = 0.0;
    for (int step = 0; step < ac.steps; ++step) {
        auto b = random_batch(ds, ac.batch, cfg.patch, rng);
        opt.zero_grad();
        auto loss = nn::mse_loss(model.reconstruct(b.reference), b.reference);
        loss.backward();
        opt.step();
        last = loss.item();
        if (!std::isfinite(last)) throw training_error("autoencoder loss diverged at step " + std::to_string(step));
        if (progress && (step % 100 == 0 || step + 1 == ac.steps)) {
            progress("autoencoder step " + std::to_string(step) + " mse " + std::to_string(last));
        }
    }
    return last;
}

// Rescales latents to unit standard deviation over a set of reference crops.
inline float estimate_latent_scale(const LatentDiffusion<float>& model, const PairDataset& ds, const TrainConfig& cfg) {
    rng_t rng(derive_seed(cfg.seed, 0x7363ULL));
    auto b = random_batch(ds, std::max(cfg.val_size, 16), cfg.patch, rng, false);
    nn::no_grad_guard ng;
    auto z = model.encode(b.reference);
    double mean = 0, sq = 0;
    for (float v : z.values()) mean += v;
    mean /= static_cast<double>(z.numel());
    for (float v : z.values()) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(z.numel()));
    if (!(sd > 1e-8)) throw training_error("autoencoder latents are degenerate (std " + std::to_string(sd) + ")");
    return static_cast<float>(model.latent_scale() / sd);
}

// Full training run. With a non-empty out_dir, writes loss.log, val.log,
// periodic checkpoints and model.drck.
inline TrainResult train(const PairDataset& ds, const TrainConfig& cfg, const std::filesystem::path& out_dir = {},
                         const ProgressFn& progress = {}) {
    cfg.validate();
    check_patch(ds, cfg.patch);
    TrainResult r;
    r.model = LatentDiffusion<float>(cfg.model, cfg.seed);

    std::ofstream loss_log, val_log;
    if (!out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec) throw io_error("cannot create " + out_dir.string() + ": " + ec.message());
        loss_log.open(out_dir / "loss.log");
        val_log.open(out_dir / "val.log");
        if (!loss_log || !val_log) throw io_error("cannot open logs in " + out_dir.string());
        loss_log << "# step\tloss\n";
        val_log << "# step\tval_loss\n";
    }

    r.autoencoder_loss = train_autoencoder(r.model, ds, cfg, progress);
    r.model.set_latent_scale(estimate_latent_scale(r.model, ds, cfg));

    const auto val = make_validation_batch(ds, r.model, cfg);
    auto record_val = [&](int step) {
        const double v = validation_loss(r.model, val);
        r.validation.emplace_back(step, v);
        if (val_log.is_open()) val_log << step << '\t' << v << '\n' << std::flush;
        if (progress) progress("step " + std::to_string(step) + " val_loss " + std::to_string(v));
    };
    record_val(0);

    nn::AdamConfig adam;
    adam.weight_decay = cfg.weight_decay;
    adam.schedule = {cfg.lr, cfg.warmup, cfg.steps};
    nn::AdamW<float> opt(r.model.diffusion_parameters(), adam);
    rng_t rng(derive_seed(cfg.seed, 0x747261696eULL));

    for (int step = 1; step <= cfg.steps; ++step) {
        auto b = random_batch(ds, cfg.batch, cfg.patch, rng);
        opt.zero_grad();
        auto res = training_loss(r.model, b.reference, b.cond, b.prompts, rng, cfg.dropout);
        res.loss.backward();
        opt.step();
        const double l = res.loss.item();
        if (!std::isfinite(l)) throw training_error("diffusion loss diverged at step " + std::to_string(step));
        r.losses.emplace_back(step, l);
        if (loss_log.is_open()) loss_log << step << '\t' << l << '\n';
        if (step % cfg.val_every == 0 || step == cfg.steps) record_val(step);
        if (!out_dir.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
            r.checkpoints.push_back(out_dir / checkpoint_name(step));
            r.model.save(r.checkpoints.back());
        }
    }
    if (!out_dir.empty()) {
        r.model.save(out_dir / "model.drck");
        if (!loss_log || !val_log) throw io_error("failed writing logs in " + out_dir.string());
    }
    return r;
}

} // namespace diffuseraw::diffusion
