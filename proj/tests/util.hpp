#pragma once

#include <cstring>
#include <vector>

#include "cabin/ops.hpp"
#include "cabin/random.hpp"
#include "cabin/tensor.hpp"

namespace testutil {

inline cabin::num::Tensor random_tensor(cabin::Rng& rng, std::size_t r,
                                        std::size_t c, double lo = -1.0,
                                        double hi = 1.0,
                                        bool requires_grad = true) {
  cabin::num::Tensor t(r, c, requires_grad);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Scalarizes a tensor through verified ops: flatten, then dot with fixed
// weights so every output coordinate influences the loss distinctly.
inline cabin::num::Tensor weighted_sum(const cabin::num::Tensor& t,
                                       const std::vector<double>& w) {
  using namespace cabin::num;
  Tensor flat = reshape(t, 1, t.size());
  Tensor wt = Tensor::from_values(t.size(), 1, std::vector<double>(w));
  return matmul(flat, wt);
}

inline std::vector<double> fixed_weights(std::size_t n, std::uint64_t seed) {
  cabin::Rng rng(seed);
  std::vector<double> w(n);
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return w;
}

inline bool bit_equal(const cabin::num::Tensor& a,
                      const cabin::num::Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace testutil
