#pragma once

// Paired patch loading for diffusion training: conditioning patches from the
// preprocessed short-exposure RAW and reference patches from the sRGB render,
// cropped from the same scene region.

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "diffuseraw/diffusion/text.hpp"
#include "diffuseraw/error.hpp"
#include "diffuseraw/image.hpp"
#include "diffuseraw/io/ppm.hpp"
#include "diffuseraw/nn/tensor.hpp"
#include "diffuseraw/random.hpp"
#include "diffuseraw/raw/braw.hpp"
#include "diffuseraw/raw/preprocess.hpp"
#include "diffuseraw/sim/dataset.hpp"

namespace diffuseraw::diffusion {

// HWC image -> [1,C,H,W] tensor.
template <typename T = float>
nn::Tensor<T> image_to_tensor(const LinearImage& img) {
    const std::size_t P = static_cast<std::size_t>(img.width) * img.height;
    std::vector<T> out(P * img.channels);
    for (std::size_t p = 0; p < P; ++p) {
        for (int c = 0; c < img.channels; ++c) out[c * P + p] = static_cast<T>(img.data[p * img.channels + c]);
    }
    return nn::Tensor<T>({1, img.channels, img.height, img.width}, std::move(out));
}

// Sample n of an NCHW tensor -> HWC image.
template <typename T>
LinearImage tensor_to_image(const nn::Tensor<T>& t, int n, colorspace space) {
    if (t.rank() != 4 || n < 0 || n >= t.dim(0)) {
        throw dimension_error("tensor_to_image: sample " + std::to_string(n) + " of " + nn::shape_string(t.shape()));
    }
    const int C = t.dim(1), H = t.dim(2), W = t.dim(3);
    const std::size_t P = static_cast<std::size_t>(H) * W;
    LinearImage img(W, H, C, space);
    const T* src = t.values().data() + static_cast<std::size_t>(n) * C * P;
    for (std::size_t p = 0; p < P; ++p) {
        for (int c = 0; c < C; ++c) img.data[p * C + c] = static_cast<float>(src[c * P + p]);
    }
    return img;
}

struct TrainingPair {
    std::string id;
    double ratio = 1.0;
    int prompt = null_prompt;
    LinearImage cond;       // preprocessed RAW, H x W x 4
    LinearImage reference;  // sRGB, H x W x 3
};

struct PairDataset {
    std::vector<TrainingPair> pairs;

    int width() const { return pairs.empty() ? 0 : pairs.front().reference.width; }
    int height() const { return pairs.empty() ? 0 : pairs.front().reference.height; }
};

inline PairDataset load_pairs(const sim::Manifest& manifest) {
    if (manifest.records.empty()) throw validation_error("manifest has no pairs");
    PairDataset ds;
    for (const auto& rec : manifest.records) {
        TrainingPair p;
        p.id = rec.pair_id();
        p.ratio = rec.ratio;
        p.prompt = prompt_for_ratio(rec.ratio);
        p.cond = preprocess_raw(load_braw(manifest.resolve(rec.noisy)), rec.ratio);
        p.reference = load_ppm(manifest.resolve(rec.reference));
        if (p.cond.width != p.reference.width || p.cond.height != p.reference.height) {
            throw dimension_error("pair " + p.id + ": RAW is " + p.cond.shape_string() + " but reference is " +
                                  p.reference.shape_string());
        }
        ds.pairs.push_back(std::move(p));
    }
    return ds;
}

struct PatchBatch {
    nn::Tensor<float> reference;  // [N,3,P,P]
    nn::Tensor<float> cond;       // [N,4,P,P]
    std::vector<int> prompts;
};

struct CropSpec {
    std::size_t pair = 0;
    int y = 0;
    int x = 0;
    bool flip = false;
};

namespace detail {

inline void copy_patch(const LinearImage& img, const CropSpec& c, int patch, float* dst) {
    const std::size_t P = static_cast<std::size_t>(patch) * patch;
    for (int y = 0; y < patch; ++y) {
        for (int x = 0; x < patch; ++x) {
            const int sx = c.flip ? c.x + patch - 1 - x : c.x + x;
            for (int ch = 0; ch < img.channels; ++ch) {
                dst[ch * P + static_cast<std::size_t>(y) * patch + x] = img.at(c.y + y, sx, ch);
            }
        }
    }
}

} // namespace detail

inline void check_patch(const PairDataset& ds, int patch) {
    if (ds.pairs.empty()) throw validation_error("dataset has no pairs");
    if (patch <= 0) throw parameter_error("patch size must be positive");
    for (const auto& p : ds.pairs) {
        if (patch > p.reference.width || patch > p.reference.height) {
            throw parameter_error("patch " + std::to_string(patch) + " larger than image " + p.id + " (" +
                                  p.reference.shape_string() + ")");
        }
    }
}

inline PatchBatch gather_batch(const PairDataset& ds, const std::vector<CropSpec>& crops, int patch) {
    const int N = static_cast<int>(crops.size());
    const std::size_t P = static_cast<std::size_t>(patch) * patch;
    std::vector<float> ref(static_cast<std::size_t>(N) * 3 * P), cond(static_cast<std::size_t>(N) * 4 * P);
    PatchBatch b;
    for (int n = 0; n < N; ++n) {
        const auto& pair = ds.pairs.at(crops[n].pair);
        detail::copy_patch(pair.reference, crops[n], patch, ref.data() + n * 3 * P);
        detail::copy_patch(pair.cond, crops[n], patch, cond.data() + n * 4 * P);
        b.prompts.push_back(pair.prompt);
    }
    b.reference = nn::Tensor<float>({N, 3, patch, patch}, std::move(ref));
    b.cond = nn::Tensor<float>({N, 4, patch, patch}, std::move(cond));
    return b;
}

// Random pair, random even-aligned crop offset, random horizontal flip.
inline CropSpec random_crop(const PairDataset& ds, int patch, rng_t& rng, bool flip) {
    CropSpec c;
    c.pair = std::uniform_int_distribution<std::size_t>(0, ds.pairs.size() - 1)(rng);
    const auto& img = ds.pairs[c.pair].reference;
    c.y = 2 * std::uniform_int_distribution<int>(0, (img.height - patch) / 2)(rng);
    c.x = 2 * std::uniform_int_distribution<int>(0, (img.width - patch) / 2)(rng);
    c.flip = flip && std::bernoulli_distribution(0.5)(rng);
    return c;
}

inline PatchBatch random_batch(const PairDataset& ds, int batch, int patch, rng_t& rng, bool augment = true) {
    check_patch(ds, patch);
    std::vector<CropSpec> crops;
    for (int n = 0; n < batch; ++n) crops.push_back(random_crop(ds, patch, rng, augment));
    return gather_batch(ds, crops, patch);
}

} // namespace diffuseraw::diffusion
