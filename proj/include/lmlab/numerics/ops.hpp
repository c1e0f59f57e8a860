#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lmlab/numerics/tensor.hpp"

namespace lmlab::ops {

// a[m×k] · b[k×n]. Backward: dA = dC·Bᵀ, dB = Aᵀ·dC.
Tensor matmul(const Tensor& a, const Tensor& b);

// a[m×k] · b[n×k]ᵀ without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// x[...×n] + bias[n]; the only broadcast the library supports.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& x);
Tensor silu(const Tensor& x);

// Softmax along `axis` (negative counts from the end) with max subtraction.
// `keep`, when non-empty, has one entry per element; zero entries get
// exactly zero probability. A line with no kept entries is a ShapeError.
Tensor softmax(const Tensor& x, int axis = -1, std::span<const std::uint8_t> keep = {});

// Row lookup table[ids[i]] -> out[i]; backward scatter-adds into table.
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len);
Tensor concat_cols(const std::vector<Tensor>& parts);

// x[m×n] -> [m], log Σ_j exp x_ij.
Tensor logsumexp_rows(const Tensor& x);

// x[m×n], idx[m] -> [m], x_i,idx[i].
Tensor pick(const Tensor& x, std::span<const std::int32_t> idx);

// Σ_i w_i x_i as a scalar; `weights` is constant.
Tensor weighted_sum(const Tensor& x, std::span<const double> weights);

// Inverted dropout: kept entries scaled by 1/(1-p). Identity when p == 0.
Tensor dropout(const Tensor& x, double p, std::mt19937_64& gen);

}  // namespace lmlab::ops
