#pragma once

// Toy latent diffusion model: convolutional autoencoder (E, D), a
// conditioning encoder for packed RAW input, a prompt embedding table and a
// three-resolution UNet noise predictor. Tensors are NCHW.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "diffuseraw/diffusion/schedule.hpp"
#include "diffuseraw/diffusion/text.hpp"
#include "diffuseraw/error.hpp"
#include "diffuseraw/nn/checkpoint.hpp"
#include "diffuseraw/nn/layers.hpp"
#include "diffuseraw/nn/ops.hpp"
#include "diffuseraw/random.hpp"

namespace diffuseraw::diffusion {

using nn::NamedTensors;
using nn::Tensor;

struct ModelConfig {
    int image_channels = 3;
    int cond_channels = 4;
    int latent_channels = 4;
    int ae_width = 32;
    int unet_c0 = 32;
    int unet_c1 = 64;
    int unet_c2 = 64;
    int time_dim = 64;
    int emb_dim = 128;
    int vocab = vocabulary_size();

    // Spatial dims must be a multiple of this (4x latent stride, 2 UNet levels).
    static constexpr int spatial_multiple = 16;

    void validate() const {
        for (int v : {image_channels, cond_channels, latent_channels, ae_width, unet_c0, unet_c1, unet_c2, time_dim,
                      emb_dim, vocab}) {
            if (v <= 0) throw parameter_error("ModelConfig: all sizes must be positive");
        }
        if (ae_width % 2 || time_dim % 2) throw parameter_error("ModelConfig: ae_width and time_dim must be even");
    }

    std::vector<float> encode() const {
        return {float(image_channels), float(cond_channels), float(latent_channels), float(ae_width),
                float(unet_c0),        float(unet_c1),       float(unet_c2),         float(time_dim),
                float(emb_dim),        float(vocab)};
    }

    static ModelConfig decode(const std::vector<float>& v) {
        if (v.size() != 10) throw format_error("model metadata has " + std::to_string(v.size()) + " fields, expected 10");
        ModelConfig c;
        int* fields[] = {&c.image_channels, &c.cond_channels, &c.latent_channels, &c.ae_width, &c.unet_c0,
                         &c.unet_c1,        &c.unet_c2,       &c.time_dim,        &c.emb_dim,  &c.vocab};
        for (std::size_t i = 0; i < v.size(); ++i) *fields[i] = static_cast<int>(v[i]);
        c.validate();
        return c;
    }
};

// Sinusoidal embedding of integer timesteps: [sin(t f_i), cos(t f_i)], f_i = 10000^(-i/half).
template <typename T>
Tensor<T> timestep_embedding(const std::vector<int>& ts, int dim) {
    const int half = dim / 2;
    std::vector<T> out(ts.size() * static_cast<std::size_t>(dim));
    for (std::size_t n = 0; n < ts.size(); ++n) {
        for (int i = 0; i < half; ++i) {
            const double f = std::exp(-std::log(10000.0) * i / half);
            out[n * dim + i] = static_cast<T>(std::sin(ts[n] * f));
            out[n * dim + half + i] = static_cast<T>(std::cos(ts[n] * f));
        }
    }
    return Tensor<T>({static_cast<int>(ts.size()), dim}, std::move(out));
}

template <typename T>
struct ResBlock {
    nn::GroupNorm<T> norm1, norm2;
    nn::Conv2d<T> conv1, conv2, skip;
    nn::Linear<T> emb_proj;
    bool has_skip = false;

    ResBlock() = default;
    ResBlock(int in, int out, int emb_dim, rng_t& rng)
        : norm1(in),
          norm2(out),
          conv1(in, out, 3, 1, 1, rng),
          conv2(out, out, 3, 1, 1, rng),
          emb_proj(emb_dim, out, rng),
          has_skip(in != out) {
        if (has_skip) skip = nn::Conv2d<T>(in, out, 1, 1, 0, rng);
    }

    // emb_act: silu of the combined time/prompt embedding, [N, emb_dim].
    Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& emb_act) const {
        auto h = conv1(nn::silu(norm1(x)));
        h = nn::add_channel_bias(h, emb_proj(emb_act));
        h = conv2(nn::silu(norm2(h)));
        return nn::add(h, has_skip ? skip(x) : x);
    }

    void collect(const std::string& prefix, NamedTensors<T>& out) const {
        norm1.collect(prefix + ".norm1", out);
        conv1.collect(prefix + ".conv1", out);
        emb_proj.collect(prefix + ".emb_proj", out);
        norm2.collect(prefix + ".norm2", out);
        conv2.collect(prefix + ".conv2", out);
        if (has_skip) skip.collect(prefix + ".skip", out);
    }
};

// Two stride-2 stages: [N,in,H,W] -> [N,out,H/4,W/4].
template <typename T>
struct DownEncoder {
    nn::Conv2d<T> c0, c1, c2, c3;

    DownEncoder() = default;
    DownEncoder(int in, int width, int out, rng_t& rng)
        : c0(in, width / 2, 3, 1, 1, rng),
          c1(width / 2, width, 3, 2, 1, rng),
          c2(width, width, 3, 2, 1, rng),
          c3(width, out, 3, 1, 1, rng) {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        auto h = nn::silu(c0(x));
        h = nn::silu(c1(h));
        h = nn::silu(c2(h));
        return c3(h);
    }

    void collect(const std::string& prefix, NamedTensors<T>& out) const {
        c0.collect(prefix + ".conv0", out);
        c1.collect(prefix + ".conv1", out);
        c2.collect(prefix + ".conv2", out);
        c3.collect(prefix + ".conv3", out);
    }
};

template <typename T>
struct UpDecoder {
    nn::Conv2d<T> c0, c3;
    nn::ConvTranspose2d<T> u1, u2;

    UpDecoder() = default;
    UpDecoder(int in, int width, int out, rng_t& rng)
        : c0(in, width, 3, 1, 1, rng),
          c3(width / 2, out, 3, 1, 1, rng),
          u1(width, width, 4, 2, 1, rng),
          u2(width, width / 2, 4, 2, 1, rng) {}

    Tensor<T> operator()(const Tensor<T>& z) const {
        auto h = nn::silu(c0(z));
        h = nn::silu(u1(h));
        h = nn::silu(u2(h));
        return c3(h);
    }

    void collect(const std::string& prefix, NamedTensors<T>& out) const {
        c0.collect(prefix + ".conv0", out);
        u1.collect(prefix + ".up1", out);
        u2.collect(prefix + ".up2", out);
        c3.collect(prefix + ".conv3", out);
    }
};

template <typename T>
struct Autoencoder {
    DownEncoder<T> encoder;
    UpDecoder<T> decoder;

    Autoencoder() = default;
    Autoencoder(const ModelConfig& cfg, rng_t& rng)
        : encoder(cfg.image_channels, cfg.ae_width, cfg.latent_channels, rng),
          decoder(cfg.latent_channels, cfg.ae_width, cfg.image_channels, rng) {}

    Tensor<T> encode(const Tensor<T>& x) const { return encoder(x); }
    Tensor<T> decode(const Tensor<T>& z) const { return decoder(z); }

    void collect(const std::string& prefix, NamedTensors<T>& out) const {
        encoder.collect(prefix + ".encoder", out);
        decoder.collect(prefix + ".decoder", out);
    }
};

template <typename T>
struct UNet {
    nn::Conv2d<T> conv_in, down1, down2, conv_out;
    ResBlock<T> block0, block1, mid, up1, up0;
    nn::GroupNorm<T> norm_out;

    UNet() = default;
    UNet(const ModelConfig& cfg, rng_t& rng)
        : conv_in(2 * cfg.latent_channels, cfg.unet_c0, 3, 1, 1, rng),
          down1(cfg.unet_c0, cfg.unet_c1, 3, 2, 1, rng),
          down2(cfg.unet_c1, cfg.unet_c2, 3, 2, 1, rng),
          conv_out(cfg.unet_c0, cfg.latent_channels, 3, 1, 1, rng, /*zero_init=*/true),
          block0(cfg.unet_c0, cfg.unet_c0, cfg.emb_dim, rng),
          block1(cfg.unet_c1, cfg.unet_c1, cfg.emb_dim, rng),
          mid(cfg.unet_c2, cfg.unet_c2, cfg.emb_dim, rng),
          up1(cfg.unet_c2 + cfg.unet_c1, cfg.unet_c1, cfg.emb_dim, rng),
          up0(cfg.unet_c1 + cfg.unet_c0, cfg.unet_c0, cfg.emb_dim, rng),
          norm_out(cfg.unet_c0) {}

    // x: concat(z_t, conditioning latent), emb_act: [N, emb_dim]
    Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& emb_act) const {
        auto h0 = block0(conv_in(x), emb_act);
        auto h1 = block1(down1(h0), emb_act);
        auto h2 = mid(down2(h1), emb_act);
        auto u1 = up1(nn::concat_channels(nn::upsample_nearest2d(h2, 2), h1), emb_act);
        auto u0 = up0(nn::concat_channels(nn::upsample_nearest2d(u1, 2), h0), emb_act);
        return conv_out(nn::silu(norm_out(u0)));
    }

    void collect(const std::string& prefix, NamedTensors<T>& out) const {
        conv_in.collect(prefix + ".conv_in", out);
        block0.collect(prefix + ".block0", out);
        down1.collect(prefix + ".down1", out);
        block1.collect(prefix + ".block1", out);
        down2.collect(prefix + ".down2", out);
        mid.collect(prefix + ".mid", out);
        up1.collect(prefix + ".up1", out);
        up0.collect(prefix + ".up0", out);
        norm_out.collect(prefix + ".norm_out", out);
        conv_out.collect(prefix + ".conv_out", out);
    }
};

// Autoencoder + conditioning encoder + prompt encoder + UNet + schedule.
template <typename T = float>
class LatentDiffusion {
public:
    LatentDiffusion() = default;
    LatentDiffusion(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        rng_t rng(derive_seed(seed, 0x6d6f64656cULL));
        ae_ = Autoencoder<T>(cfg_, rng);
        cond_ = DownEncoder<T>(cfg_.cond_channels, cfg_.ae_width, cfg_.latent_channels, rng);
        text_ = nn::Embedding<T>(cfg_.vocab, cfg_.emb_dim, rng);
        time1_ = nn::Linear<T>(cfg_.time_dim, cfg_.emb_dim, rng);
        time2_ = nn::Linear<T>(cfg_.emb_dim, cfg_.emb_dim, rng);
        unet_ = UNet<T>(cfg_, rng);
        loaded_ = true;
    }

    bool loaded() const { return loaded_; }
    const ModelConfig& config() const { return cfg_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    T latent_scale() const { return latent_scale_; }
    void set_latent_scale(T s) {
        if (!(s > T(0)) || !std::isfinite(static_cast<double>(s))) {
            throw parameter_error("latent scale must be positive and finite");
        }
        latent_scale_ = s;
    }

    void require_loaded() const {
        if (!loaded_) throw validation_error("diffusion model is not loaded");
    }

    nn::Shape latent_shape(const nn::Shape& image_shape) const {
        if (image_shape.size() != 4) throw dimension_error("latent_shape: expected NCHW, got " + nn::shape_string(image_shape));
        return {image_shape[0], cfg_.latent_channels, image_shape[2] / 4, image_shape[3] / 4};
    }

    // Latent of an sRGB image batch [N,3,H,W], multiplied by the latent scale.
    Tensor<T> encode(const Tensor<T>& x) const {
        check_spatial(x, cfg_.image_channels, "image");
        return nn::scale(ae_.encode(x), latent_scale_);
    }

    Tensor<T> decode(const Tensor<T>& z) const { return ae_.decode(nn::scale(z, T(1) / latent_scale_)); }

    // Reconstruction path used to pretrain the autoencoder.
    Tensor<T> reconstruct(const Tensor<T>& x) const {
        check_spatial(x, cfg_.image_channels, "image");
        return ae_.decode(ae_.encode(x));
    }

    // Conditioning latent for packed RAW [N,4,H,W]; keep[n] = 0 substitutes
    // the null (all-zero) image conditioning for sample n.
    Tensor<T> condition(const Tensor<T>& c, const std::vector<T>& keep) const {
        check_spatial(c, cfg_.cond_channels, "conditioning");
        return nn::scale_samples(cond_(c), keep);
    }

    Tensor<T> condition(const Tensor<T>& c) const {
        return condition(c, std::vector<T>(static_cast<std::size_t>(c.dim(0)), T(1)));
    }

    // Noise prediction for z_t [N,c_lat,h,w] given conditioning latent, timesteps and prompt ids.
    Tensor<T> denoise(const Tensor<T>& z_t, const Tensor<T>& cond_latent, const std::vector<int>& ts,
                      const std::vector<int>& prompts) const {
        const auto N = static_cast<std::size_t>(z_t.dim(0));
        if (ts.size() != N || prompts.size() != N) {
            throw dimension_error("denoise: batch " + std::to_string(N) + " with " + std::to_string(ts.size()) +
                                  " timesteps and " + std::to_string(prompts.size()) + " prompts");
        }
        for (int t : ts) schedule_.check_timestep(t);
        auto temb = time2_(nn::silu(time1_(timestep_embedding<T>(ts, cfg_.time_dim))));
        auto emb_act = nn::silu(nn::add(temb, text_(prompts)));
        return unet_(nn::concat_channels(z_t, cond_latent), emb_act);
    }

    // Parameters trained by the diffusion objective (the autoencoder stays frozen).
    NamedTensors<T> diffusion_parameters() const {
        NamedTensors<T> out;
        cond_.collect("cond", out);
        text_.collect("text", out);
        time1_.collect("time.fc1", out);
        time2_.collect("time.fc2", out);
        unet_.collect("unet", out);
        return out;
    }

    NamedTensors<T> autoencoder_parameters() const {
        NamedTensors<T> out;
        ae_.collect("ae", out);
        return out;
    }

    // Every tensor needed to restore the model, including metadata.
    NamedTensors<T> state() const {
        auto out = autoencoder_parameters();
        for (auto& p : diffusion_parameters()) out.push_back(std::move(p));
        auto arch = cfg_.encode();
        out.emplace_back("meta.arch", Tensor<T>({static_cast<int>(arch.size())},
                                                std::vector<T>(arch.begin(), arch.end())));
        out.emplace_back("meta.latent_scale", Tensor<T>({1}, std::vector<T>{latent_scale_}));
        return out;
    }

    void save(const std::filesystem::path& path) const { nn::save_checkpoint(path, state()); }

    static LatentDiffusion load(const std::filesystem::path& path) {
        auto loaded = nn::load_checkpoint(path);
        const Tensor<T>* arch = nullptr;
        for (const auto& [name, t] : loaded) {
            if (name == "meta.arch") arch = &t;
        }
        if (!arch) throw format_error(path.string() + ": missing tensor 'meta.arch'");
        std::vector<float> fields(arch->values().begin(), arch->values().end());
        LatentDiffusion m(ModelConfig::decode(fields), 0);
        auto st = m.state();
        nn::assign_state(st, loaded);
        m.latent_scale_ = st.back().second.values()[0];
        m.set_latent_scale(m.latent_scale_);
        return m;
    }

private:
    void check_spatial(const Tensor<T>& x, int channels, const char* what) const {
        require_loaded();
        if (x.rank() != 4 || x.dim(1) != channels || x.dim(2) % ModelConfig::spatial_multiple ||
            x.dim(3) % ModelConfig::spatial_multiple || x.dim(2) == 0 || x.dim(3) == 0) {
            throw dimension_error(std::string(what) + " input " + nn::shape_string(x.shape()) + " must be [N," +
                                  std::to_string(channels) + ",H,W] with H, W positive multiples of " +
                                  std::to_string(ModelConfig::spatial_multiple));
        }
    }

    ModelConfig cfg_;
    NoiseSchedule schedule_;
    Autoencoder<T> ae_;
    DownEncoder<T> cond_;
    nn::Embedding<T> text_;
    nn::Linear<T> time1_, time2_;
    UNet<T> unet_;
    T latent_scale_ = T(1);
    bool loaded_ = false;
};

} // namespace diffuseraw::diffusion
