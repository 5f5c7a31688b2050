#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cabin/tensor.hpp"

namespace cabin::num {

// Differentiable ops. Each validates shapes, computes the forward value into
// a fresh tensor, and records a backward rule on the active tape when any
// input requires grad. With no active tape nothing is recorded, which is how
// inference and finite-difference evaluations run.

// Elementwise sum, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);

// out = s * a.
Tensor scale(const Tensor& a, double s);

// [m x k] * [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

Tensor tanh_op(const Tensor& a);

// Valid cross-correlation along the last axis. input is [Cin x T], kernel is
// [Cout x Cin*Kw] with taps laid out ci*Kw + k, output [Cout x T'],
// T' = (T - Kw) / stride + 1.
Tensor conv1d(const Tensor& input, const Tensor& kernel, std::size_t kw,
              std::size_t stride);

// a + row broadcast: row is [1 x C], added to every row of a [R x C].
Tensor broadcast_add_row(const Tensor& a, const Tensor& row);

// a + column broadcast: col is [R x 1], added to every column of a [R x C].
Tensor broadcast_add_col(const Tensor& a, const Tensor& col);

// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& a);

// Softmax over the lower triangle of square scores: row i normalizes over
// columns 0..i, entries above the diagonal are exactly zero.
Tensor causal_softmax(const Tensor& scores);

// Mean negative log-likelihood of targets[i] under logits row i, over rows
// where mask[i] is true. All-false mask gives a plain zero scalar with no
// recorded gradient.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<char>& mask);

// Sum of absolute values; subgradient at exactly 0 is 0.
Tensor l1_norm(const Tensor& a);

// Per-row normalization: zero mean, unit variance (epsilon 1e-5 inside the
// square root), then elementwise gain and bias ([1 x C] each).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

// Gathers table rows by id: out[i] = table[ids[i]]. Backward scatter-adds.
Tensor embed_rows(const Tensor& table, const std::vector<int>& ids);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);

// Column means over all rows: [R x C] -> [1 x C].
Tensor mean_rows(const Tensor& a);

// Same values, new shape (copies; rows*cols must match).
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);

// Cosine similarity of a query [1 x C] against each row of keys [N x C],
// result [1 x N]. A zero-norm query or key row gives similarity 0 with zero
// gradient (the convention for all-padding chunks).
Tensor cosine_rows(const Tensor& query, const Tensor& keys);

// When enabled, every op scans its output and throws NumericError naming the
// op on NaN/Inf. Off by default; grad_check enables it for its own passes.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

// Central finite-difference verification of reverse-mode gradients.
// f rebuilds the scalar loss from the current leaf values. For each leaf,
// up to samples_per_leaf coordinates are perturbed by +/-h (chosen by a
// seeded generator) and compared against the taped gradient. Returns the max
// of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const std::function<Tensor()>& f,
                  const std::vector<Tensor*>& leaves,
                  std::size_t samples_per_leaf = 8, double h = 1e-5,
                  std::uint64_t seed = 0);

}  // namespace cabin::num
