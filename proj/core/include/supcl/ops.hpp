#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "supcl/rng.hpp"
#include "supcl/tensor.hpp"

namespace supcl {

// Standard matrix product of a[m,k] and b[k,n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Batched product over the leading axis: a[B,m,k] x b[B,k,n], or b[B,n,k]
// taken transposed when `transpose_b` is set.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor transpose(const Tensor& a);

// Elementwise ops require identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// Adds bias[n] to every length-n row of a[..., n].
Tensor add_bias(const Tensor& a, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Exact (erf) GELU.
Tensor gelu(const Tensor& x);

// Normalizes each length-d row of x[..., d], then applies gain[d], bias[d].
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = 1e-12);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

// Row-wise log-softmax of x[m,n] restricted to entries where include[i*n+j]
// is nonzero. Excluded entries produce 0 and receive no gradient.
Tensor masked_log_softmax(const Tensor& x, std::span<const std::uint8_t> include);

// Scalar sum_i weights[i] * x[i] with constant weights.
Tensor weighted_sum(const Tensor& x, std::span<const double> weights);

// Inverted dropout. Identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, const RngStream& rng, bool training);

inline constexpr double kNormFloor = 1e-12;

// Scales every length-d row of x[..., d] to unit Euclidean norm.
Tensor l2_normalize(const Tensor& x);

// Mean over rows of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

// out[r] = table[indices[r]] for table[V,d].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);

// Stacks [m_i, d] tensors into [sum m_i, d].
Tensor concat_rows(const std::vector<Tensor>& parts);

// x[batch*seq, heads*head_dim] -> [batch*heads, seq, head_dim] and back.
Tensor split_heads(const Tensor& x, std::size_t batch, std::size_t seq, std::size_t heads);
Tensor merge_heads(const Tensor& x, std::size_t batch, std::size_t seq, std::size_t heads);

}  // namespace supcl
