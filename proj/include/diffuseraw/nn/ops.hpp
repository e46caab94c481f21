#pragma once

// Differentiable operations. Image tensors are NCHW.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "diffuseraw/error.hpp"
#include "diffuseraw/nn/gemm.hpp"
#include "diffuseraw/nn/tensor.hpp"

namespace diffuseraw::nn {

namespace detail {

inline void require_same_shape(const char* op, const Shape& a, const Shape& b) {
    if (a != b) {
        throw dimension_error(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                              shape_string(b));
    }
}

inline void require_rank(const char* op, const Shape& s, std::size_t rank) {
    if (s.size() != rank) {
        throw dimension_error(std::string(op) + ": expected rank " + std::to_string(rank) +
                              ", got shape " + shape_string(s));
    }
}

template <typename T>
void accumulate(std::shared_ptr<Node<T>>& p, std::size_t i, T v) {
    p->ensure_grad()[i] += v;
}

template <typename T>
bool wants_grad(const std::shared_ptr<Node<T>>& p) {
    return p && p->requires_grad;
}

// Geometry of a 2-D convolution over a [channels, height, width] input.
struct ConvGeometry {
    int channels, height, width, kernel, stride, pad;
    int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
    int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
    int patch() const { return channels * kernel * kernel; }
};

// col[(c*k + ky)*k + kx, (n*Ho + oy)*Wo + ox] = x[n, c, oy*s - p + ky, ox*s - p + kx]
template <typename T>
void im2col(const T* x, int batch, const ConvGeometry& g, T* col) {
    const int ho = g.out_height(), wo = g.out_width();
    const std::size_t cols = static_cast<std::size_t>(batch) * ho * wo;
    for (int c = 0; c < g.channels; ++c) {
        for (int ky = 0; ky < g.kernel; ++ky) {
            for (int kx = 0; kx < g.kernel; ++kx) {
                T* row = col + ((static_cast<std::size_t>(c) * g.kernel + ky) * g.kernel + kx) * cols;
                for (int n = 0; n < batch; ++n) {
                    const T* plane = x + (static_cast<std::size_t>(n) * g.channels + c) * g.height * g.width;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * g.stride - g.pad + ky;
                        T* dst = row + (static_cast<std::size_t>(n) * ho + oy) * wo;
                        if (iy < 0 || iy >= g.height) {
                            std::fill(dst, dst + wo, T(0));
                            continue;
                        }
                        const T* src = plane + static_cast<std::size_t>(iy) * g.width;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * g.stride - g.pad + kx;
                            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds columns back into x.
template <typename T>
void col2im(const T* col, int batch, const ConvGeometry& g, T* x) {
    const int ho = g.out_height(), wo = g.out_width();
    const std::size_t cols = static_cast<std::size_t>(batch) * ho * wo;
    for (int c = 0; c < g.channels; ++c) {
        for (int ky = 0; ky < g.kernel; ++ky) {
            for (int kx = 0; kx < g.kernel; ++kx) {
                const T* row = col + ((static_cast<std::size_t>(c) * g.kernel + ky) * g.kernel + kx) * cols;
                for (int n = 0; n < batch; ++n) {
                    T* plane = x + (static_cast<std::size_t>(n) * g.channels + c) * g.height * g.width;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * g.stride - g.pad + ky;
                        if (iy < 0 || iy >= g.height) continue;
                        const T* src = row + (static_cast<std::size_t>(n) * ho + oy) * wo;
                        T* dst = plane + static_cast<std::size_t>(iy) * g.width;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * g.stride - g.pad + kx;
                            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

// [C, N*P] <-> [N, C, P]
template <typename T>
void cnp_to_ncp(const T* src, int n, int c, std::size_t p, T* dst) {
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            const T* s = src + (static_cast<std::size_t>(ci) * n + ni) * p;
            std::copy(s, s + p, dst + (static_cast<std::size_t>(ni) * c + ci) * p);
        }
    }
}

template <typename T>
void ncp_to_cnp(const T* src, int n, int c, std::size_t p, T* dst) {
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            const T* s = src + (static_cast<std::size_t>(ni) * c + ci) * p;
            std::copy(s, s + p, dst + (static_cast<std::size_t>(ci) * n + ni) * p);
        }
    }
}

} // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("add", a.shape(), b.shape());
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return Tensor<T>::make_result(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                                  [](detail::Node<T>& self) {
                                      for (auto& p : self.parents) {
                                          if (!detail::wants_grad(p)) continue;
                                          auto& g = p->ensure_grad();
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("sub", a.shape(), b.shape());
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return Tensor<T>::make_result(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                                  [](detail::Node<T>& self) {
                                      for (int k = 0; k < 2; ++k) {
                                          auto& p = self.parents[k];
                                          if (!detail::wants_grad(p)) continue;
                                          const T sign = k == 0 ? T(1) : T(-1);
                                          auto& g = p->ensure_grad();
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("mul", a.shape(), b.shape());
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return Tensor<T>::make_result(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                                  [](detail::Node<T>& self) {
                                      auto& pa = self.parents[0];
                                      auto& pb = self.parents[1];
                                      if (detail::wants_grad(pa)) {
                                          auto& g = pa->ensure_grad();
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->data[i];
                                      }
                                      if (detail::wants_grad(pb)) {
                                          auto& g = pb->ensure_grad();
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->data[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
    return Tensor<T>::make_result(a.shape(), std::move(out), {a.node_ptr()},
                                  [s](detail::Node<T>& self) {
                                      auto& g = self.parents[0]->ensure_grad();
                                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
                                  });
}

// Multiplies sample n of a batch-major tensor by factors[n] (a constant).
template <typename T>
Tensor<T> scale_samples(const Tensor<T>& a, const std::vector<T>& factors) {
    if (a.rank() < 1 || static_cast<std::size_t>(a.dim(0)) != factors.size()) {
        throw dimension_error("scale_samples: " + std::to_string(factors.size()) +
                              " factors for shape " + shape_string(a.shape()));
    }
    const std::size_t per = factors.empty() ? 0 : a.numel() / factors.size();
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * factors[i / per];
    return Tensor<T>::make_result(a.shape(), std::move(out), {a.node_ptr()},
                                  [factors, per](detail::Node<T>& self) {
                                      auto& g = self.parents[0]->ensure_grad();
                                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += factors[i / per] * self.grad[i];
                                  });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        T v = x.values()[i];
        out[i] = v / (T(1) + std::exp(-v));
    }
    return Tensor<T>::make_result(x.shape(), std::move(out), {x.node_ptr()},
                                  [](detail::Node<T>& self) {
                                      auto& p = self.parents[0];
                                      auto& g = p->ensure_grad();
                                      for (std::size_t i = 0; i < g.size(); ++i) {
                                          T v = p->data[i];
                                          T sig = T(1) / (T(1) + std::exp(-v));
                                          g[i] += self.grad[i] * sig * (T(1) + v * (T(1) - sig));
                                      }
                                  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = T(0);
    for (T v : x.values()) acc += v;
    return Tensor<T>::make_result({1}, {acc}, {x.node_ptr()}, [](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (auto& v : g) v += self.grad[0];
    });
}

// Mean of squared differences over all elements.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("mse_loss", a.shape(), b.shape());
    const std::size_t n = a.numel();
    if (n == 0) throw dimension_error("mse_loss: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = static_cast<double>(a.values()[i]) - b.values()[i];
        acc += d * d;
    }
    return Tensor<T>::make_result({1}, {static_cast<T>(acc / n)}, {a.node_ptr(), b.node_ptr()},
                                  [n](detail::Node<T>& self) {
                                      auto& pa = self.parents[0];
                                      auto& pb = self.parents[1];
                                      const T k = T(2) * self.grad[0] / static_cast<T>(n);
                                      if (detail::wants_grad(pa)) {
                                          auto& g = pa->ensure_grad();
                                          for (std::size_t i = 0; i < n; ++i) g[i] += k * (pa->data[i] - pb->data[i]);
                                      }
                                      if (detail::wants_grad(pb)) {
                                          auto& g = pb->ensure_grad();
                                          for (std::size_t i = 0; i < n; ++i) g[i] -= k * (pa->data[i] - pb->data[i]);
                                      }
                                  });
}

// ---------------------------------------------------------------- dense

// [M,K] x [K,N] -> [M,N]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_rank("matmul", a.shape(), 2);
    detail::require_rank("matmul", b.shape(), 2);
    const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
    if (b.dim(0) != K) {
        throw dimension_error("matmul: inner dimensions differ " + shape_string(a.shape()) + " vs " +
                              shape_string(b.shape()));
    }
    std::vector<T> out(static_cast<std::size_t>(M) * N);
    detail::gemm(false, false, M, N, K, a.values().data(), b.values().data(), out.data(), false);
    return Tensor<T>::make_result({M, N}, std::move(out), {a.node_ptr(), b.node_ptr()},
                                  [M, N, K](detail::Node<T>& self) {
                                      auto& pa = self.parents[0];
                                      auto& pb = self.parents[1];
                                      if (detail::wants_grad(pa)) {
                                          detail::gemm(false, true, M, K, N, self.grad.data(), pb->data.data(),
                                                       pa->ensure_grad().data(), true);
                                      }
                                      if (detail::wants_grad(pb)) {
                                          detail::gemm(true, false, K, N, M, pa->data.data(), self.grad.data(),
                                                       pb->ensure_grad().data(), true);
                                      }
                                  });
}

// x [N,in], weight [out,in], bias [out] -> [N,out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias = nullptr) {
    detail::require_rank("linear", x.shape(), 2);
    detail::require_rank("linear", weight.shape(), 2);
    const int N = x.dim(0), in = x.dim(1), out_f = weight.dim(0);
    if (weight.dim(1) != in) {
        throw dimension_error("linear: input " + shape_string(x.shape()) + " vs weight " +
                              shape_string(weight.shape()));
    }
    if (bias && (bias->rank() != 1 || bias->dim(0) != out_f)) {
        throw dimension_error("linear: bias " + shape_string(bias->shape()) + " vs weight " +
                              shape_string(weight.shape()));
    }
    std::vector<T> out(static_cast<std::size_t>(N) * out_f);
    detail::gemm(false, true, N, out_f, in, x.values().data(), weight.values().data(), out.data(), false);
    if (bias) {
        for (int n = 0; n < N; ++n) {
            for (int o = 0; o < out_f; ++o) out[static_cast<std::size_t>(n) * out_f + o] += bias->values()[o];
        }
    }
    std::vector<std::shared_ptr<detail::Node<T>>> parents{x.node_ptr(), weight.node_ptr()};
    if (bias) parents.push_back(bias->node_ptr());
    return Tensor<T>::make_result({N, out_f}, std::move(out), std::move(parents),
                                  [N, in, out_f](detail::Node<T>& self) {
                                      auto& px = self.parents[0];
                                      auto& pw = self.parents[1];
                                      if (detail::wants_grad(px)) {
                                          detail::gemm(false, false, N, in, out_f, self.grad.data(), pw->data.data(),
                                                       px->ensure_grad().data(), true);
                                      }
                                      if (detail::wants_grad(pw)) {
                                          detail::gemm(true, false, out_f, in, N, self.grad.data(), px->data.data(),
                                                       pw->ensure_grad().data(), true);
                                      }
                                      if (self.parents.size() > 2 && detail::wants_grad(self.parents[2])) {
                                          auto& g = self.parents[2]->ensure_grad();
                                          for (int n = 0; n < N; ++n) {
                                              for (int o = 0; o < out_f; ++o) g[o] += self.grad[static_cast<std::size_t>(n) * out_f + o];
                                          }
                                      }
                                  });
}

// table [V,D], ids (N values in [0,V)) -> [N,D]
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<int>& ids) {
    detail::require_rank("embedding", table.shape(), 2);
    const int V = table.dim(0), D = table.dim(1);
    const int N = static_cast<int>(ids.size());
    std::vector<T> out(static_cast<std::size_t>(N) * D);
    for (int n = 0; n < N; ++n) {
        if (ids[n] < 0 || ids[n] >= V) {
            throw dimension_error("embedding: id " + std::to_string(ids[n]) + " outside table " +
                                  shape_string(table.shape()));
        }
        std::copy_n(table.values().begin() + static_cast<std::ptrdiff_t>(ids[n]) * D, D,
                    out.begin() + static_cast<std::ptrdiff_t>(n) * D);
    }
    return Tensor<T>::make_result({N, D}, std::move(out), {table.node_ptr()},
                                  [ids, D](detail::Node<T>& self) {
                                      auto& g = self.parents[0]->ensure_grad();
                                      for (std::size_t n = 0; n < ids.size(); ++n) {
                                          for (int d = 0; d < D; ++d) {
                                              g[static_cast<std::size_t>(ids[n]) * D + d] += self.grad[n * D + d];
                                          }
                                      }
                                  });
}

// ---------------------------------------------------------------- image ops

// x [N,C,H,W] + bias [N,C] broadcast over H,W.
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    detail::require_rank("add_channel_bias", x.shape(), 4);
    detail::require_rank("add_channel_bias", bias.shape(), 2);
    const int N = x.dim(0), C = x.dim(1);
    if (bias.dim(0) != N || bias.dim(1) != C) {
        throw dimension_error("add_channel_bias: input " + shape_string(x.shape()) + " vs bias " +
                              shape_string(bias.shape()));
    }
    const std::size_t P = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    std::vector<T> out(x.values());
    for (std::size_t nc = 0; nc < static_cast<std::size_t>(N) * C; ++nc) {
        const T b = bias.values()[nc];
        for (std::size_t p = 0; p < P; ++p) out[nc * P + p] += b;
    }
    return Tensor<T>::make_result(x.shape(), std::move(out), {x.node_ptr(), bias.node_ptr()},
                                  [P](detail::Node<T>& self) {
                                      auto& px = self.parents[0];
                                      auto& pb = self.parents[1];
                                      if (detail::wants_grad(px)) {
                                          auto& g = px->ensure_grad();
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                      }
                                      if (detail::wants_grad(pb)) {
                                          auto& g = pb->ensure_grad();
                                          for (std::size_t nc = 0; nc < g.size(); ++nc) {
                                              T acc = T(0);
                                              for (std::size_t p = 0; p < P; ++p) acc += self.grad[nc * P + p];
                                              g[nc] += acc;
                                          }
                                      }
                                  });
}

// x [N,C,H,W], weight [Cout,C,k,k], bias [Cout] -> [N,Cout,Ho,Wo]
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, int stride = 1,
                 int pad = 0) {
    detail::require_rank("conv2d", x.shape(), 4);
    detail::require_rank("conv2d", weight.shape(), 4);
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = weight.dim(0), k = weight.dim(2);
    if (weight.dim(1) != C || weight.dim(3) != k) {
        throw dimension_error("conv2d: input " + shape_string(x.shape()) + " vs weight " +
                              shape_string(weight.shape()));
    }
    if (bias && (bias->rank() != 1 || bias->dim(0) != Cout)) {
        throw dimension_error("conv2d: bias " + shape_string(bias->shape()) + " vs weight " +
                              shape_string(weight.shape()));
    }
    if (stride < 1 || pad < 0) throw parameter_error("conv2d: invalid stride/padding");
    const detail::ConvGeometry g{C, H, W, k, stride, pad};
    const int Ho = g.out_height(), Wo = g.out_width();
    if (Ho <= 0 || Wo <= 0) {
        throw dimension_error("conv2d: kernel " + shape_string(weight.shape()) + " larger than input " +
                              shape_string(x.shape()));
    }
    const std::size_t P = static_cast<std::size_t>(Ho) * Wo;
    const int cols = static_cast<int>(N * P);

    auto col = std::make_shared<std::vector<T>>(static_cast<std::size_t>(g.patch()) * cols);
    detail::im2col(x.values().data(), N, g, col->data());
    std::vector<T> ycnp(static_cast<std::size_t>(Cout) * cols);
    detail::gemm(false, false, Cout, cols, g.patch(), weight.values().data(), col->data(), ycnp.data(), false);
    std::vector<T> out(ycnp.size());
    detail::cnp_to_ncp(ycnp.data(), N, Cout, P, out.data());
    if (bias) {
        for (int n = 0; n < N; ++n) {
            for (int co = 0; co < Cout; ++co) {
                T* dst = out.data() + (static_cast<std::size_t>(n) * Cout + co) * P;
                const T b = bias->values()[co];
                for (std::size_t p = 0; p < P; ++p) dst[p] += b;
            }
        }
    }
    std::vector<std::shared_ptr<detail::Node<T>>> parents{x.node_ptr(), weight.node_ptr()};
    if (bias) parents.push_back(bias->node_ptr());
    return Tensor<T>::make_result(
        {N, Cout, Ho, Wo}, std::move(out), std::move(parents),
        [g, N, Cout, P, cols, col](detail::Node<T>& self) {
            auto& px = self.parents[0];
            auto& pw = self.parents[1];
            std::vector<T> gy(self.grad.size());
            detail::ncp_to_cnp(self.grad.data(), N, Cout, P, gy.data());
            if (detail::wants_grad(pw)) {
                detail::gemm(false, true, Cout, g.patch(), cols, gy.data(), col->data(),
                             pw->ensure_grad().data(), true);
            }
            if (self.parents.size() > 2 && detail::wants_grad(self.parents[2])) {
                auto& gb = self.parents[2]->ensure_grad();
                for (int co = 0; co < Cout; ++co) {
                    const T* row = gy.data() + static_cast<std::size_t>(co) * cols;
                    T acc = T(0);
                    for (int i = 0; i < cols; ++i) acc += row[i];
                    gb[co] += acc;
                }
            }
            if (detail::wants_grad(px)) {
                std::vector<T> gcol(static_cast<std::size_t>(g.patch()) * cols);
                detail::gemm(true, false, g.patch(), cols, Cout, pw->data.data(), gy.data(), gcol.data(), false);
                detail::col2im(gcol.data(), N, g, px->ensure_grad().data());
            }
        });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, std::nullptr_t, int stride = 1, int pad = 0) {
    return conv2d(x, weight, static_cast<const Tensor<T>*>(nullptr), stride, pad);
}

// Adjoint of conv2d with respect to its input.
// x [N,Cin,H,W], weight [Cin,Cout,k,k], bias [Cout] -> [N,Cout,(H-1)s-2p+k,(W-1)s-2p+k]
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                           int stride = 1, int pad = 0) {
    detail::require_rank("conv_transpose2d", x.shape(), 4);
    detail::require_rank("conv_transpose2d", weight.shape(), 4);
    const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = weight.dim(1), k = weight.dim(2);
    if (weight.dim(0) != Cin || weight.dim(3) != k) {
        throw dimension_error("conv_transpose2d: input " + shape_string(x.shape()) + " vs weight " +
                              shape_string(weight.shape()));
    }
    if (bias && (bias->rank() != 1 || bias->dim(0) != Cout)) {
        throw dimension_error("conv_transpose2d: bias " + shape_string(bias->shape()) + " vs weight " +
                              shape_string(weight.shape()));
    }
    if (stride < 1 || pad < 0) throw parameter_error("conv_transpose2d: invalid stride/padding");
    const int Ho = (H - 1) * stride - 2 * pad + k, Wo = (W - 1) * stride - 2 * pad + k;
    if (Ho <= 0 || Wo <= 0) throw dimension_error("conv_transpose2d: empty output");
    // Geometry of the forward convolution this op is the adjoint of.
    const detail::ConvGeometry g{Cout, Ho, Wo, k, stride, pad};
    const std::size_t P = static_cast<std::size_t>(H) * W;
    const int cols = static_cast<int>(N * P);
    const int patch = g.patch();

    auto xcnp = std::make_shared<std::vector<T>>(static_cast<std::size_t>(Cin) * cols);
    detail::ncp_to_cnp(x.values().data(), N, Cin, P, xcnp->data());
    std::vector<T> col(static_cast<std::size_t>(patch) * cols);
    detail::gemm(true, false, patch, cols, Cin, weight.values().data(), xcnp->data(), col.data(), false);
    std::vector<T> out(static_cast<std::size_t>(N) * Cout * Ho * Wo, T(0));
    detail::col2im(col.data(), N, g, out.data());
    const std::size_t Po = static_cast<std::size_t>(Ho) * Wo;
    if (bias) {
        for (int n = 0; n < N; ++n) {
            for (int co = 0; co < Cout; ++co) {
                T* dst = out.data() + (static_cast<std::size_t>(n) * Cout + co) * Po;
                for (std::size_t p = 0; p < Po; ++p) dst[p] += bias->values()[co];
            }
        }
    }
    std::vector<std::shared_ptr<detail::Node<T>>> parents{x.node_ptr(), weight.node_ptr()};
    if (bias) parents.push_back(bias->node_ptr());
    return Tensor<T>::make_result(
        {N, Cout, Ho, Wo}, std::move(out), std::move(parents),
        [g, N, Cin, Cout, P, Po, cols, patch, xcnp](detail::Node<T>& self) {
            auto& px = self.parents[0];
            auto& pw = self.parents[1];
            std::vector<T> gcol(static_cast<std::size_t>(patch) * cols);
            detail::im2col(self.grad.data(), N, g, gcol.data());
            if (detail::wants_grad(px)) {
                std::vector<T> gx(static_cast<std::size_t>(Cin) * cols);
                detail::gemm(false, false, Cin, cols, patch, pw->data.data(), gcol.data(), gx.data(), false);
                std::vector<T> gx_ncp(gx.size());
                detail::cnp_to_ncp(gx.data(), N, Cin, P, gx_ncp.data());
                auto& dst = px->ensure_grad();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gx_ncp[i];
            }
            if (detail::wants_grad(pw)) {
                detail::gemm(false, true, Cin, patch, cols, xcnp->data(), gcol.data(),
                             pw->ensure_grad().data(), true);
            }
            if (self.parents.size() > 2 && detail::wants_grad(self.parents[2])) {
                auto& gb = self.parents[2]->ensure_grad();
                for (int n = 0; n < N; ++n) {
                    for (int co = 0; co < Cout; ++co) {
                        const T* src = self.grad.data() + (static_cast<std::size_t>(n) * Cout + co) * Po;
                        T acc = T(0);
                        for (std::size_t p = 0; p < Po; ++p) acc += src[p];
                        gb[co] += acc;
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, std::nullptr_t, int stride = 1,
                           int pad = 0) {
    return conv_transpose2d(x, weight, static_cast<const Tensor<T>*>(nullptr), stride, pad);
}

// x [N,C,H,W]; gamma, beta [C]. Statistics per (sample, group).
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int groups, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
    detail::require_rank("group_norm", x.shape(), 4);
    const int N = x.dim(0), C = x.dim(1);
    if (groups <= 0 || C % groups != 0) {
        throw dimension_error("group_norm: " + std::to_string(groups) + " groups do not divide " +
                              shape_string(x.shape()));
    }
    if (gamma.numel() != static_cast<std::size_t>(C) || beta.numel() != static_cast<std::size_t>(C)) {
        throw dimension_error("group_norm: affine parameters " + shape_string(gamma.shape()) +
                              " vs input " + shape_string(x.shape()));
    }
    const std::size_t P = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    const int cpg = C / groups;
    const std::size_t m = static_cast<std::size_t>(cpg) * P;

    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    auto rstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(N) * groups);
    std::vector<T> out(x.numel());
    const auto& xv = x.values();
    for (int n = 0; n < N; ++n) {
        for (int gi = 0; gi < groups; ++gi) {
            const std::size_t base = (static_cast<std::size_t>(n) * C + static_cast<std::size_t>(gi) * cpg) * P;
            double mean = 0.0;
            for (std::size_t i = 0; i < m; ++i) mean += xv[base + i];
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                double d = xv[base + i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(m);
            const T r = static_cast<T>(1.0 / std::sqrt(var + eps));
            (*rstd)[static_cast<std::size_t>(n) * groups + gi] = r;
            for (int cc = 0; cc < cpg; ++cc) {
                const int c = gi * cpg + cc;
                const T ga = gamma.values()[c], be = beta.values()[c];
                for (std::size_t p = 0; p < P; ++p) {
                    const std::size_t i = base + static_cast<std::size_t>(cc) * P + p;
                    const T h = static_cast<T>((xv[i] - mean) * r);
                    (*xhat)[i] = h;
                    out[i] = h * ga + be;
                }
            }
        }
    }
    return Tensor<T>::make_result(
        x.shape(), std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
        [N, C, groups, cpg, P, m, xhat, rstd](detail::Node<T>& self) {
            auto& px = self.parents[0];
            auto& pg = self.parents[1];
            auto& pb = self.parents[2];
            const auto& gy = self.grad;
            if (detail::wants_grad(pg) || detail::wants_grad(pb)) {
                auto& gg = pg->ensure_grad();
                auto& gb = pb->ensure_grad();
                for (int n = 0; n < N; ++n) {
                    for (int c = 0; c < C; ++c) {
                        const std::size_t base = (static_cast<std::size_t>(n) * C + c) * P;
                        T sg = T(0), sb = T(0);
                        for (std::size_t p = 0; p < P; ++p) {
                            sg += gy[base + p] * (*xhat)[base + p];
                            sb += gy[base + p];
                        }
                        if (pg->requires_grad) gg[c] += sg;
                        if (pb->requires_grad) gb[c] += sb;
                    }
                }
            }
            if (!detail::wants_grad(px)) return;
            auto& gx = px->ensure_grad();
            for (int n = 0; n < N; ++n) {
                for (int gi = 0; gi < groups; ++gi) {
                    const std::size_t base = (static_cast<std::size_t>(n) * C + static_cast<std::size_t>(gi) * cpg) * P;
                    double mean_d = 0.0, mean_dx = 0.0;
                    for (int cc = 0; cc < cpg; ++cc) {
                        const T ga = pg->data[gi * cpg + cc];
                        for (std::size_t p = 0; p < P; ++p) {
                            const std::size_t i = base + static_cast<std::size_t>(cc) * P + p;
                            const double d = gy[i] * ga;
                            mean_d += d;
                            mean_dx += d * (*xhat)[i];
                        }
                    }
                    mean_d /= static_cast<double>(m);
                    mean_dx /= static_cast<double>(m);
                    const T r = (*rstd)[static_cast<std::size_t>(n) * groups + gi];
                    for (int cc = 0; cc < cpg; ++cc) {
                        const T ga = pg->data[gi * cpg + cc];
                        for (std::size_t p = 0; p < P; ++p) {
                            const std::size_t i = base + static_cast<std::size_t>(cc) * P + p;
                            gx[i] += static_cast<T>(r * (gy[i] * ga - mean_d - (*xhat)[i] * mean_dx));
                        }
                    }
                }
            }
        });
}

// Non-overlapping k x k average pooling.
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int k = 2) {
    detail::require_rank("avg_pool2d", x.shape(), 4);
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (k < 1 || H % k || W % k) {
        throw dimension_error("avg_pool2d: window " + std::to_string(k) + " does not tile " +
                              shape_string(x.shape()));
    }
    const int Ho = H / k, Wo = W / k;
    const T inv = T(1) / static_cast<T>(k * k);
    std::vector<T> out(static_cast<std::size_t>(N) * C * Ho * Wo, T(0));
    const auto& xv = x.values();
    for (std::size_t nc = 0; nc < static_cast<std::size_t>(N) * C; ++nc) {
        for (int y = 0; y < H; ++y) {
            for (int xx = 0; xx < W; ++xx) {
                out[(nc * Ho + y / k) * Wo + xx / k] += xv[(nc * H + y) * W + xx] * inv;
            }
        }
    }
    return Tensor<T>::make_result({N, C, Ho, Wo}, std::move(out), {x.node_ptr()},
                                  [N, C, H, W, Ho, Wo, k, inv](detail::Node<T>& self) {
                                      auto& g = self.parents[0]->ensure_grad();
                                      for (std::size_t nc = 0; nc < static_cast<std::size_t>(N) * C; ++nc) {
                                          for (int y = 0; y < H; ++y) {
                                              for (int xx = 0; xx < W; ++xx) {
                                                  g[(nc * H + y) * W + xx] += self.grad[(nc * Ho + y / k) * Wo + xx / k] * inv;
                                              }
                                          }
                                      }
                                  });
}

template <typename T>
Tensor<T> upsample_nearest2d(const Tensor<T>& x, int factor = 2) {
    detail::require_rank("upsample_nearest2d", x.shape(), 4);
    if (factor < 1) throw parameter_error("upsample_nearest2d: factor must be >= 1");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = H * factor, Wo = W * factor;
    std::vector<T> out(static_cast<std::size_t>(N) * C * Ho * Wo);
    const auto& xv = x.values();
    for (std::size_t nc = 0; nc < static_cast<std::size_t>(N) * C; ++nc) {
        for (int y = 0; y < Ho; ++y) {
            for (int xx = 0; xx < Wo; ++xx) {
                out[(nc * Ho + y) * Wo + xx] = xv[(nc * H + y / factor) * W + xx / factor];
            }
        }
    }
    return Tensor<T>::make_result({N, C, Ho, Wo}, std::move(out), {x.node_ptr()},
                                  [N, C, H, W, Ho, Wo, factor](detail::Node<T>& self) {
                                      auto& g = self.parents[0]->ensure_grad();
                                      for (std::size_t nc = 0; nc < static_cast<std::size_t>(N) * C; ++nc) {
                                          for (int y = 0; y < Ho; ++y) {
                                              for (int xx = 0; xx < Wo; ++xx) {
                                                  g[(nc * H + y / factor) * W + xx / factor] += self.grad[(nc * Ho + y) * Wo + xx];
                                              }
                                          }
                                      }
                                  });
}

// [N,Ca,H,W] ++ [N,Cb,H,W] -> [N,Ca+Cb,H,W]
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_rank("concat_channels", a.shape(), 4);
    detail::require_rank("concat_channels", b.shape(), 4);
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
        throw dimension_error("concat_channels: shape mismatch " + shape_string(a.shape()) + " vs " +
                              shape_string(b.shape()));
    }
    const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
    const std::size_t P = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
    const std::size_t sa = Ca * P, sb = Cb * P;
    std::vector<T> out(static_cast<std::size_t>(N) * (sa + sb));
    for (int n = 0; n < N; ++n) {
        std::copy_n(a.values().begin() + static_cast<std::ptrdiff_t>(n * sa), sa, out.begin() + static_cast<std::ptrdiff_t>(n * (sa + sb)));
        std::copy_n(b.values().begin() + static_cast<std::ptrdiff_t>(n * sb), sb,
                    out.begin() + static_cast<std::ptrdiff_t>(n * (sa + sb) + sa));
    }
    return Tensor<T>::make_result({N, Ca + Cb, a.dim(2), a.dim(3)}, std::move(out),
                                  {a.node_ptr(), b.node_ptr()}, [N, sa, sb](detail::Node<T>& self) {
                                      auto& pa = self.parents[0];
                                      auto& pb = self.parents[1];
                                      for (int n = 0; n < N; ++n) {
                                          const T* src = self.grad.data() + static_cast<std::size_t>(n) * (sa + sb);
                                          if (detail::wants_grad(pa)) {
                                              T* dst = pa->ensure_grad().data() + static_cast<std::size_t>(n) * sa;
                                              for (std::size_t i = 0; i < sa; ++i) dst[i] += src[i];
                                          }
                                          if (detail::wants_grad(pb)) {
                                              T* dst = pb->ensure_grad().data() + static_cast<std::size_t>(n) * sb;
                                              for (std::size_t i = 0; i < sb; ++i) dst[i] += src[sa + i];
                                          }
                                      }
                                  });
}

} // namespace diffuseraw::nn
