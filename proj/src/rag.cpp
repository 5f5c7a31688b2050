#include "cabin/rag.hpp"

#include <cctype>

#include "cabin/errors.hpp"

namespace cabin::rag {

using namespace cabin::num;

PreferenceDocument chunk_document(const std::string& text) {
  PreferenceDocument doc;
  std::string current;
  auto flush = [&] {
    std::size_t b = 0, e = current.size();
    while (b < e && std::isspace(static_cast<unsigned char>(current[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(current[e - 1]))) --e;
    std::string trimmed = current.substr(b, e - b);
    // A bare terminator is not a sentence.
    if (!trimmed.empty() && trimmed != "." && trimmed != "!" && trimmed != "?" &&
        doc.sentences.size() < kMaxChunks)
      doc.sentences.push_back(trimmed);
    current.clear();
  };
  for (char ch : text) {
    current.push_back(ch);
    if (ch == '.' || ch == '!' || ch == '?') flush();
  }
  flush();
  if (doc.sentences.empty())
    throw DataError("preference document has no sentences");
  return doc;
}

ChunkMatrix tokenize_pad(const PreferenceDocument& doc,
                         const data::Vocab& vocab, std::size_t m) {
  if (m < 1) throw ConfigError("max sentence length must be >= 1");
  ChunkMatrix out;
  for (const auto& sentence : doc.sentences) {
    std::vector<int> ids = vocab.encode(sentence);
    if (ids.empty()) continue;  // whitespace-only chunk
    out.lengths.push_back(std::min(ids.size(), m));
    ids.resize(m, data::Vocab::kPad);  // truncate or pad to exactly m
    out.ids.push_back(std::move(ids));
  }
  if (out.ids.empty())
    throw DataError("preference document has no tokenizable sentences");
  return out;
}

EncodedChunks encode_chunks(const ChunkMatrix& chunks, const Tensor& embed,
                            const std::vector<Tensor>& convs,
                            std::size_t kernel,
                            const std::vector<std::size_t>& strides) {
  if (convs.size() != strides.size())
    throw ConfigError("conv stack and stride list disagree in depth");
  EncodedChunks out;
  std::vector<Tensor> key_rows;
  for (const auto& ids : chunks.ids) {
    Tensor x = transpose(embed_rows(embed, ids));  // [C x M]
    for (std::size_t layer = 0; layer < convs.size(); ++layer) {
      x = conv1d(x, convs[layer], kernel, strides[layer]);
      if (layer + 1 < convs.size()) x = tanh_op(x);
    }
    Tensor tokens = transpose(x);  // [K x C]
    key_rows.push_back(mean_rows(tokens));
    out.tokens.push_back(std::move(tokens));
  }
  out.keys = concat_rows(key_rows);  // [N x C]
  return out;
}

RagOutput retrieve(const Tensor& visual_query, const EncodedChunks& chunks,
                   double temperature) {
  if (temperature <= 0) throw ConfigError("rag temperature must be positive");
  if (chunks.tokens.empty()) throw DataError("retrieve over zero chunks");
  RagOutput out;
  Tensor sims = cosine_rows(visual_query, chunks.keys);  // [1 x N]
  out.weights = softmax_rows(scale(sims, 1.0 / temperature));
  // Flatten each sentence block to a row and mix: [1 x N] x [N x K*C].
  const std::size_t k = chunks.tokens.front().rows();
  const std::size_t c = chunks.tokens.front().cols();
  std::vector<Tensor> flat;
  for (const auto& t : chunks.tokens) flat.push_back(reshape(t, 1, k * c));
  Tensor mixed = matmul(out.weights, concat_rows(flat));
  out.tokens = reshape(mixed, k, c);
  return out;
}

}  // namespace cabin::rag
