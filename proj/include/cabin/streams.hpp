#pragma once

#include <string>
#include <vector>

#include "cabin/data.hpp"
#include "cabin/kinds.hpp"
#include "cabin/ops.hpp"
#include "cabin/ppg.hpp"

namespace cabin::streams {

using num::Tensor;

// One modality's projected embedding sandwiched between the kind's begin and
// end marker rows: tokens is [(L+2) x C].
struct StreamSegment {
  StreamKind kind = StreamKind::FrontRGB;
  Tensor tokens;
};

// One span of the assembled sequence, by name and position.
struct Span {
  std::string name;
  std::size_t start = 0;
  std::size_t len = 0;
};

// Full model input: embeddings [S x C], a token id per position (0 where the
// position carries an embedding rather than text), and the supervision mask.
// Layout spans are disjoint, ordered, and cover [0, S).
struct AssembledSequence {
  Tensor embeddings;
  std::vector<int> ids;
  std::vector<char> loss_mask;
  std::vector<Span> layout;
};

// Patchifies every frame into P*P*ch rows, embeds them with patch_w
// [P*P*ch x D], applies tanh then the shared deep layer [D x D], and
// mean-pools over all patches and frames. Returns [1 x D]. ConfigError if
// the frame size is not divisible by patch or channels disagree with patch_w.
Tensor encode_view(const data::Clip& clip, const Tensor& patch_w,
                   const Tensor& deep_w, std::size_t patch);

// Same stack as encode_view with a per-modality first layer; the clip must
// be single-channel.
Tensor encode_modality(const data::Clip& clip, const Tensor& patch_w,
                       const Tensor& deep_w, std::size_t patch);

// Two strided conv1d layers (widths 7 then 5, stride 2, tanh between) over
// the waveform, mean-pooled over time. conv1 is [8 x 7], conv2 is [D x 40].
// Both stay frozen; SizeError when the signal is too short for the stack.
Tensor encode_phys(const data::PhysSignal& signal, const Tensor& conv1,
                   const Tensor& conv2);

// Two-layer map into language space: [1 x D] -> tanh([1 x D] w1) w2 reshaped
// to [L x C]. w1 is [D x C], w2 is [C x L*C].
Tensor project_to_language(const Tensor& feature, const Tensor& w1,
                           const Tensor& w2, std::size_t l_tokens,
                           std::size_t c_width);

// Sandwiches em [L x C] between the kind's marker rows [1 x C].
StreamSegment wrap_with_markers(const Tensor& em, StreamKind kind,
                                const Tensor& begin_marker,
                                const Tensor& end_marker);

// Concatenates the full input sequence:
//   segments (canonical kind order), rag block, <bos>, question, doc tokens,
//   cot block, response, <cos>.
// rag and doc are optional (empty tensor / empty ids). Text spans embed
// through vocab_embedding and carry their ids; loss_mask is true exactly on
// the response tokens and the final <cos>. LayoutError on out-of-order or
// duplicate segment kinds.
AssembledSequence assemble(const std::vector<StreamSegment>& segments,
                           const Tensor& rag_block,
                           const std::vector<int>& question_ids,
                           const std::vector<int>& doc_ids,
                           const Tensor& cot_block,
                           const std::vector<int>& response_ids,
                           const Tensor& vocab_embedding);

// The generation prefix: everything up to and including the cot block, with
// no response span and no trailing <cos>.
AssembledSequence assemble_prefix(const std::vector<StreamSegment>& segments,
                                  const Tensor& rag_block,
                                  const std::vector<int>& question_ids,
                                  const std::vector<int>& doc_ids,
                                  const Tensor& cot_block,
                                  const Tensor& vocab_embedding);

}  // namespace cabin::streams
