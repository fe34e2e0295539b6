#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "msamil/numcore/tensor.hpp"

namespace msamil::numcore {

// Differentiable ops. Matrices are rank-2 row-major; vectors passed as gain,
// bias or conv bias may be rank-1 or a single row.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_bias(const Tensor& m, const Tensor& bias);  // bias broadcast over rows
Tensor silu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softmax_rows(const Tensor& m);
Tensor layer_norm(const Tensor& m, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor cross_entropy(const Tensor& logits, std::size_t label);
Tensor sum(const Tensor& a);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& m, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& m, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& m, std::span<const std::size_t> index);
Tensor reshape(const Tensor& a, Shape shape);

/// 2-D convolution on an HxWxC map with zero padding.
/// weight is (k*k*C_in) x C_out with rows ordered (ky, kx, c_in); bias has C_out entries.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t kernel,
              std::size_t stride, std::size_t pad);

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

namespace kernels {
// C[m x n] (+)= A[m x k] * B[k x n]
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate);
// C[k x n] += A^T * D with A[m x k], D[m x n]
void gemm_tn_acc(const double* a, const double* d, double* c, std::size_t m, std::size_t k,
                 std::size_t n);
// C[m x k] += D[m x n] * B^T with B[k x n]
void gemm_nt_acc(const double* d, const double* b, double* c, std::size_t m, std::size_t n,
                 std::size_t k);
}  // namespace kernels

}  // namespace msamil::numcore
