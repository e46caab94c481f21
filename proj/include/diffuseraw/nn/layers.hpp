#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "diffuseraw/nn/ops.hpp"
#include "diffuseraw/nn/tensor.hpp"
#include "diffuseraw/random.hpp"

namespace diffuseraw::nn {

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

namespace detail {

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for conv/linear.
template <typename T>
Tensor<T> fan_in_uniform(Shape shape, int fan_in, rng_t& rng) {
    const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1))));
    return Tensor<T>::uniform(std::move(shape), rng, -bound, bound, true);
}

} // namespace detail

template <typename T>
struct Conv2d {
    Tensor<T> weight;  // [out, in, k, k]
    Tensor<T> bias;    // [out]
    int stride = 1;
    int pad = 0;

    Conv2d() = default;
    Conv2d(int in, int out, int kernel, int stride_, int pad_, rng_t& rng, bool zero_init = false)
        : weight(zero_init ? Tensor<T>::zeros({out, in, kernel, kernel}, true)
                           : detail::fan_in_uniform<T>({out, in, kernel, kernel}, in * kernel * kernel, rng)),
          bias(Tensor<T>::zeros({out}, true)),
          stride(stride_),
          pad(pad_) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, &bias, stride, pad); }

    void collect(const std::string& prefix, NamedTensors<T>& out) const {
        out.emplace_back(prefix + ".weight", weight);
        out.emplace_back(prefix + ".bias", bias);
    }
};

template <typename T>
struct ConvTranspose2d {
    Tensor<T> weight;  // [in, out, k, k]
    Tensor<T> bias;    // [out]
    int stride = 1;
    int pad = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(int in, int out, int kernel, int stride_, int pad_, rng_t& rng)
        : weight(detail::fan_in_uniform<T>({in, out, kernel, kernel}, out * kernel * kernel, rng)),
          bias(Tensor<T>::zeros({out}, true)),
          stride(stride_),
          pad(pad_) {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        return conv_transpose2d(x, weight, &bias, stride, pad);
    }

    void collect(const std::string& prefix, NamedTensors<T>& out) const {
        out.emplace_back(prefix + ".weight", weight);
        out.emplace_back(prefix + ".bias", bias);
    }
};

template <typename T>
struct Linear {
    Tensor<T> weight;  // [out, in]
    Tensor<T> bias;    // [out]

    Linear() = default;
    Linear(int in, int out, rng_t& rng)
        : weight(detail::fan_in_uniform<T>({out, in}, in, rng)), bias(Tensor<T>::zeros({out}, true)) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, &bias); }

    void collect(const std::string& prefix, NamedTensors<T>& out) const {
        out.emplace_back(prefix + ".weight", weight);
        out.emplace_back(prefix + ".bias", bias);
    }
};

// Largest group count <= 8 that divides the channel count.
inline int default_groups(int channels) {
    for (int g = std::min(8, channels); g > 1; --g) {
        if (channels % g == 0) return g;
    }
    return 1;
}

template <typename T>
struct GroupNorm {
    Tensor<T> gamma;
    Tensor<T> beta;
    int groups = 1;

    GroupNorm() = default;
    explicit GroupNorm(int channels)
        : gamma(Tensor<T>({channels}, T(1), true)),
          beta(Tensor<T>::zeros({channels}, true)),
          groups(default_groups(channels)) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return group_norm(x, groups, gamma, beta); }

    void collect(const std::string& prefix, NamedTensors<T>& out) const {
        out.emplace_back(prefix + ".gamma", gamma);
        out.emplace_back(prefix + ".beta", beta);
    }
};

template <typename T>
struct Embedding {
    Tensor<T> table;  // [vocab, dim]

    Embedding() = default;
    Embedding(int vocab, int dim, rng_t& rng) : table(Tensor<T>::randn({vocab, dim}, rng, T(1), true)) {}

    Tensor<T> operator()(const std::vector<int>& ids) const { return embedding(table, ids); }

    void collect(const std::string& prefix, NamedTensors<T>& out) const {
        out.emplace_back(prefix + ".table", table);
    }
};

} // namespace diffuseraw::nn
