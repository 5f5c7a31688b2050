#pragma once

#include <string>
#include <vector>

#include "cabin/ops.hpp"
#include "cabin/vocab.hpp"

namespace cabin::rag {

using num::Tensor;

// A user's preference document split into self-contained sentences.
struct PreferenceDocument {
  std::string user_id;
  std::vector<std::string> sentences;
};

// Tokenized sentences padded to a common length M with the pad id (0).
struct ChunkMatrix {
  std::vector<std::vector<int>> ids;  // N rows of exactly M ids
  std::vector<std::size_t> lengths;   // true token counts, each >= 1
};

// Per-sentence compressed tokens ([K x C] each) and their mean-pooled keys
// stacked as [N x C].
struct EncodedChunks {
  std::vector<Tensor> tokens;
  Tensor keys;
};

// K retrieved context tokens and the retrieval distribution over sentences.
struct RagOutput {
  Tensor tokens;   // [K x C]
  Tensor weights;  // [1 x N], non-negative, sums to 1
};

// At most this many sentences are kept per document; excess is discarded the
// same way overlong sentences are truncated to M tokens.
constexpr std::size_t kMaxChunks = 32;

// Splits on sentence terminators {. ! ?}, trimming whitespace and dropping
// empty chunks; each kept chunk retains its terminator. DataError when no
// sentence survives.
PreferenceDocument chunk_document(const std::string& text);

// Word-level tokenization through the shared vocabulary, truncated to M and
// padded with id 0; unknown words map to <unk>.
ChunkMatrix tokenize_pad(const PreferenceDocument& doc,
                         const data::Vocab& vocab, std::size_t m);

// Embeds each sentence to [M x C] and compresses the length axis with four
// conv1d layers (tanh between layers) down to K rows. conv[i] is
// [C x C*kernel]; strides must map M to K exactly (validated at config
// time). Keys are the per-sentence means over the K rows.
EncodedChunks encode_chunks(const ChunkMatrix& chunks, const Tensor& embed,
                            const std::vector<Tensor>& convs,
                            std::size_t kernel,
                            const std::vector<std::size_t>& strides);

// weights = softmax(cosine(query, keys) / temperature); tokens = the
// weight-averaged sentence tokens. Zero-norm query or key rows contribute
// similarity 0. Fully differentiable.
RagOutput retrieve(const Tensor& visual_query, const EncodedChunks& chunks,
                   double temperature);

}  // namespace cabin::rag
