#pragma once

// Row-major GEMM on raw buffers, backed by Eigen.

#include <Eigen/Core>

namespace diffuseraw::nn::detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C[M,N] (+)= op(A) * op(B), op(A) is MxK, op(B) is KxN.
template <typename T>
void gemm(bool trans_a, bool trans_b, int M, int N, int K, const T* A, const T* B, T* C,
          bool accumulate) {
    using CMap = Eigen::Map<const MatRM<T>>;
    Eigen::Map<MatRM<T>> c(C, M, N);
    if (!accumulate) c.setZero();
    if (M == 0 || N == 0 || K == 0) return;
    if (!trans_a && !trans_b) {
        c.noalias() += CMap(A, M, K) * CMap(B, K, N);
    } else if (!trans_a && trans_b) {
        c.noalias() += CMap(A, M, K) * CMap(B, N, K).transpose();
    } else if (trans_a && !trans_b) {
        c.noalias() += CMap(A, K, M).transpose() * CMap(B, K, N);
    } else {
        c.noalias() += CMap(A, K, M).transpose() * CMap(B, N, K).transpose();
    }
}

} // namespace diffuseraw::nn::detail
