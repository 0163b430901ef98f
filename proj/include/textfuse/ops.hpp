#pragma once

// Differentiable primitives. Each op computes its forward value eagerly and,
// when recording, registers a backward rule on the active tape.

#include <cstddef>
#include <span>
#include <vector>

#include "textfuse/tensor.hpp"

namespace textfuse {

inline constexpr double kLogClamp = 1e-12;
inline constexpr double kLayerNormEps = 1e-5;

// [m x k] * [k x n]. Rank-1 operands are treated as a single row.
Tensor matmul(const Tensor& a, const Tensor& b);
// [m x k] * [n x k]^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Elementwise sum. b may also be a row ([n] or [1 x n]) broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Elementwise product, with the same row broadcasting as add().
Tensor mul(const Tensor& a, const Tensor& b);
// scale * x + shift
Tensor affine(const Tensor& x, double scale, double shift = 0.0);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
// Natural log of max(x, 1e-12); the gradient is zero where the clamp is active.
Tensor log(const Tensor& x);
// Gradient passes only where lo <= x <= hi.
Tensor clamp(const Tensor& x, double lo, double hi);

// Row-wise softmax over unmasked columns; masked entries are exactly zero.
Tensor softmax_masked(const Tensor& x, const Mask& mask);
Tensor softmax_masked(const Tensor& x, const MaskMatrix& mask);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

// axis 0 stacks rows (rank-1 inputs count as one row); axis 1 joins columns.
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids);

// Mean over the valid columns of every row of the numerically stable
// max(z,0) - z*y + log(1 + exp(-|z|)). targets is a constant of logits' shape.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets, const Mask& valid_cols);

}  // namespace textfuse
