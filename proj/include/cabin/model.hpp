#pragma once

#include <vector>

#include "cabin/config.hpp"
#include "cabin/ops.hpp"
#include "cabin/streams.hpp"

namespace cabin::model {

using num::ParamStore;
using num::Tensor;

// Decoder forward pass over pre-assembled input embeddings [S x C]: learned
// positions, n_layers pre-norm blocks (causal multi-head attention, then a
// tanh MLP), final layer norm, vocabulary projection. Returns [S x V].
// SizeError when S exceeds max_seq_len.
Tensor forward(const Tensor& embeddings, ParamStore& params,
               const Config& cfg);

struct LossBreakdown {
  Tensor total;    // lvi + lambda * lce
  Tensor lvi;      // masked next-token cross-entropy
  Tensor lce_raw;  // unweighted eliciting loss
};

// Next-token cross-entropy on the masked positions (targets shifted one to
// the left) plus the weighted eliciting term on the chain block. A sequence
// with no supervised positions contributes lvi = 0 and warns on stderr.
LossBreakdown total_loss(const streams::AssembledSequence& seq,
                         const Tensor& cot, ParamStore& params,
                         const Config& cfg, double lambda_lce);

// Greedy decoding from an assembled prefix (everything up to and including
// the chain block). Ties break toward the lowest token id; stops at <cos>,
// after max_new_tokens, or when the context window fills. Runs without
// recording gradients.
std::vector<int> generate(const streams::AssembledSequence& prefix,
                          ParamStore& params, const Config& cfg,
                          std::size_t max_new_tokens);

}  // namespace cabin::model
