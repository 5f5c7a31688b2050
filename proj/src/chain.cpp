#include "cabin/chain.hpp"

#include <cmath>

#include "cabin/errors.hpp"

namespace cabin::chain {

using namespace cabin::num;

Tensor fuse_to_cot(const std::vector<streams::StreamSegment>& segments,
                   const Tensor& rag_tokens,
                   const std::vector<Tensor>& convs, std::size_t kernel,
                   const std::vector<std::size_t>& strides, bool bounded) {
  if (segments.empty()) throw LayoutError("fuse_to_cot needs at least one segment");
  if (convs.size() != strides.size())
    throw ConfigError("fuser conv stack and stride list disagree in depth");
  std::vector<Tensor> parts;
  for (const auto& seg : segments) parts.push_back(seg.tokens);
  if (!rag_tokens.empty()) parts.push_back(rag_tokens);
  Tensor x = transpose(concat_rows(parts));  // [C x T]
  for (std::size_t layer = 0; layer < convs.size(); ++layer) {
    x = conv1d(x, convs[layer], kernel, strides[layer]);
    if (layer + 1 < convs.size()) x = tanh_op(x);
  }
  Tensor cot = transpose(x);  // [L_cot x C]
  return bounded ? tanh_op(cot) : cot;
}

Tensor lce_loss(const Tensor& cot) {
  return scale(l1_norm(cot), -1.0 / static_cast<double>(cot.size()));
}

namespace {

// |Pearson r| between two equal-length vectors under the degenerate-variance
// convention: both constant and equal -> 1, any other zero-variance case -> 0.
double abs_pearson(const Tensor& cot, std::size_t i, std::size_t j) {
  const std::size_t c = cot.cols();
  double mi = 0, mj = 0;
  for (std::size_t d = 0; d < c; ++d) {
    mi += cot.at(i, d);
    mj += cot.at(j, d);
  }
  mi /= c;
  mj /= c;
  double sii = 0, sjj = 0, sij = 0;
  for (std::size_t d = 0; d < c; ++d) {
    const double a = cot.at(i, d) - mi;
    const double b = cot.at(j, d) - mj;
    sii += a * a;
    sjj += b * b;
    sij += a * b;
  }
  if (sii == 0 || sjj == 0) {
    if (sii != 0 || sjj != 0) return 0;
    for (std::size_t d = 0; d < c; ++d)
      if (cot.at(i, d) != cot.at(j, d)) return 0;
    return 1;
  }
  return std::abs(sij / std::sqrt(sii * sjj));
}

}  // namespace

CotDiagnostics diagnostics(const Tensor& cot) {
  CotDiagnostics d;
  const std::size_t l = cot.rows(), c = cot.cols();
  if (l == 0 || c == 0) throw SizeError("diagnostics on empty chain");

  double pair_sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = i + 1; j < l; ++j, ++pairs)
      pair_sum += abs_pearson(cot, i, j);
  d.mean_abs_pearson = pairs ? pair_sum / pairs : 0;

  d.per_dim_range.resize(c);
  for (std::size_t dim = 0; dim < c; ++dim) {
    double lo = cot.at(0, dim), hi = cot.at(0, dim);
    for (std::size_t i = 1; i < l; ++i) {
      lo = std::min(lo, cot.at(i, dim));
      hi = std::max(hi, cot.at(i, dim));
    }
    d.per_dim_range[dim] = hi - lo;
    d.mean_range += hi - lo;
  }
  d.mean_range /= c;

  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t dim = 0; dim < c; ++dim)
      d.mean_abs_value += std::abs(cot.at(i, dim));
  d.mean_abs_value /= static_cast<double>(l * c);
  return d;
}

DiagComparison compare_runs(const CotDiagnostics& a, const CotDiagnostics& b) {
  if (a.per_dim_range.size() != b.per_dim_range.size())
    throw ConfigError("diagnostics compare runs of different chain widths");
  DiagComparison cmp;
  cmp.d_pearson = a.mean_abs_pearson - b.mean_abs_pearson;
  cmp.d_range = a.mean_range - b.mean_range;
  cmp.d_abs_value = a.mean_abs_value - b.mean_abs_value;
  auto sign = [](double v) { return v > 0 ? "+" : v < 0 ? "-" : "0"; };
  cmp.summary = std::string("pearson:") + sign(cmp.d_pearson) +
                " range:" + sign(cmp.d_range) +
                " abs:" + sign(cmp.d_abs_value);
  return cmp;
}

}  // namespace cabin::chain
