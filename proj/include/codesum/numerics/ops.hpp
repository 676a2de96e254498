#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "codesum/numerics/rng.hpp"
#include "codesum/numerics/tensor.hpp"

namespace codesum::ops {

// Elementwise arithmetic with numpy-style broadcasting of either operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// scale * x + shift.
Tensor affine(const Tensor& x, double scale, double shift = 0.0);

Tensor relu(const Tensor& x);
/// Smallest |input| relu has seen on this thread since reset_relu_margin().
/// Finite-difference checks use it to stay clear of the kink at zero.
void reset_relu_margin();
double relu_margin();
Tensor sigmoid(const Tensor& x);

/// Sum of all entries, as a rank-0 tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Matrix product over the two trailing axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose_last2(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& x, Shape shape);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
/// Rows of axis 0 picked by `rows` (repeats allowed).
Tensor index_select0(const Tensor& x, const std::vector<std::size_t>& rows);

/// Softmax over the last axis. Entries whose mask bit is 0 get probability
/// exactly 0; the mask broadcasts against x from the right.
Tensor softmax_lastdim(const Tensor& x, const Mask* mask = nullptr);

inline constexpr double kLayerNormEps = 1e-5;
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps);

/// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

/// Rows of `table` ([V, d]) for every id; result shape ids.shape + [d].
Tensor embedding(const Tensor& table, const IndexTensor& ids);

/// out[..., j] = x[..., index[..., j]]. The index leading axes broadcast
/// against x's leading axes; the result takes x's leading shape.
Tensor gather_lastdim(const Tensor& x, const IndexTensor& index);
/// Adjoint of gather_lastdim: out[..., r] = sum of x[..., j] with index[..., j] == r.
Tensor scatter_add_lastdim(const Tensor& x, const IndexTensor& index, std::size_t out_size);

/// Mean over entries with weight > 0 of -log(max(p[..., target], floor)).
/// `probs` is [..., C]; targets/weights have the leading shape of probs.
Tensor nll_from_probs(const Tensor& probs, const IndexTensor& targets, const std::vector<double>& weights,
                      double floor = 1e-12);

} // namespace codesum::ops
