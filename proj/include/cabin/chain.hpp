#pragma once

#include <string>
#include <vector>

#include "cabin/ops.hpp"
#include "cabin/rag.hpp"
#include "cabin/streams.hpp"

namespace cabin::chain {

using num::Tensor;

// Degeneracy measurements of a latent chain block (the trivial-solution
// signature is high self-similarity with tiny value ranges).
struct CotDiagnostics {
  double mean_abs_pearson = 0;        // mean |r| over unordered token pairs
  std::vector<double> per_dim_range;  // max - min across tokens, one per dim
  double mean_range = 0;
  double mean_abs_value = 0;
};

struct DiagComparison {
  double d_pearson = 0;  // a minus b, per field
  double d_range = 0;
  double d_abs_value = 0;
  std::string summary;  // e.g. "pearson:+ range:- abs:-"
};

// Concatenates all segment rows plus the rag tokens along the length axis
// and compresses with two conv1d layers (tanh between) to exactly cot_length
// rows; final tanh when bounded. conv[i] is [C x C*kernel]. rag may be empty
// (the long-context baseline has no retrieval block).
Tensor fuse_to_cot(const std::vector<streams::StreamSegment>& segments,
                   const Tensor& rag_tokens,
                   const std::vector<Tensor>& convs, std::size_t kernel,
                   const std::vector<std::size_t>& strides, bool bounded);

// Eliciting loss: -|cot|_1 / (rows * cols). Mean-normalized so the weight is
// comparable across chain lengths.
Tensor lce_loss(const Tensor& cot);

// Plain (non-differentiable) statistics over the chain values. Token pairs
// with degenerate variance score r = 1 when both are constant and equal,
// else 0.
CotDiagnostics diagnostics(const Tensor& cot);

// Field-wise deltas a - b with a sign summary. The two runs must measure
// chains of the same width (ConfigError otherwise).
DiagComparison compare_runs(const CotDiagnostics& a, const CotDiagnostics& b);

}  // namespace cabin::chain
