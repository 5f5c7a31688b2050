#include "cabin/streams.hpp"

#include "cabin/errors.hpp"
#include "cabin/vocab.hpp"

namespace cabin::streams {

using namespace cabin::num;

namespace {

// Rows = one patch per (frame, tile), cols = P*P*ch pixels in row-major
// (y, x, channel) order within the tile.
Tensor patchify(const data::Clip& clip, std::size_t patch) {
  if (patch == 0 || clip.height % patch != 0 || clip.width % patch != 0)
    throw ConfigError("frame " + std::to_string(clip.height) + "x" +
                      std::to_string(clip.width) +
                      " is not divisible by patch " + std::to_string(patch));
  const std::size_t py = clip.height / patch;
  const std::size_t px = clip.width / patch;
  const std::size_t n_patches = clip.frames * py * px;
  const std::size_t patch_dim = patch * patch * clip.channels;
  Tensor out(n_patches, patch_dim);
  std::size_t row = 0;
  for (std::size_t f = 0; f < clip.frames; ++f)
    for (std::size_t ty = 0; ty < py; ++ty)
      for (std::size_t tx = 0; tx < px; ++tx, ++row) {
        std::size_t col = 0;
        for (std::size_t y = 0; y < patch; ++y)
          for (std::size_t x = 0; x < patch; ++x)
            for (std::size_t c = 0; c < clip.channels; ++c, ++col)
              out.at(row, col) = clip.at(f, ty * patch + y, tx * patch + x, c);
      }
  return out;
}

Tensor encode_patches(const data::Clip& clip, const Tensor& patch_w,
                      const Tensor& deep_w, std::size_t patch) {
  Tensor patches = patchify(clip, patch);
  if (patches.cols() != patch_w.rows())
    throw ConfigError("patch embedding expects " +
                      std::to_string(patch_w.rows()) + " pixels per patch, clip gives " +
                      std::to_string(patches.cols()));
  Tensor h = tanh_op(matmul(patches, patch_w));
  Tensor deep = matmul(h, deep_w);
  return mean_rows(deep);
}

}  // namespace

Tensor encode_view(const data::Clip& clip, const Tensor& patch_w,
                   const Tensor& deep_w, std::size_t patch) {
  if (clip.channels != 3)
    throw ConfigError("encode_view expects a 3-channel clip");
  return encode_patches(clip, patch_w, deep_w, patch);
}

Tensor encode_modality(const data::Clip& clip, const Tensor& patch_w,
                       const Tensor& deep_w, std::size_t patch) {
  if (clip.channels != 1)
    throw ConfigError("encode_modality expects a 1-channel clip");
  return encode_patches(clip, patch_w, deep_w, patch);
}

Tensor encode_phys(const data::PhysSignal& signal, const Tensor& conv1,
                   const Tensor& conv2) {
  const std::size_t t = signal.samples.size();
  // Layer widths 7 and 5 at stride 2: the second layer needs at least 5
  // positions after the first.
  if (t < 7 || (t - 7) / 2 + 1 < 5)
    throw SizeError("phys signal of " + std::to_string(t) +
                    " samples is too short for the conv stack");
  Tensor wave(1, t);
  for (std::size_t i = 0; i < t; ++i) wave.at(0, i) = signal.samples[i];
  Tensor h1 = tanh_op(conv1d(wave, conv1, 7, 2));
  Tensor h2 = conv1d(h1, conv2, 5, 2);
  // Mean over time positions; h2 is [D x T'], so pool across columns.
  return mean_rows(transpose(h2));
}

Tensor project_to_language(const Tensor& feature, const Tensor& w1,
                           const Tensor& w2, std::size_t l_tokens,
                           std::size_t c_width) {
  Tensor h = tanh_op(matmul(feature, w1));
  Tensor flat = matmul(h, w2);
  return reshape(flat, l_tokens, c_width);
}

StreamSegment wrap_with_markers(const Tensor& em, StreamKind kind,
                                const Tensor& begin_marker,
                                const Tensor& end_marker) {
  if (begin_marker.rows() != 1 || end_marker.rows() != 1 ||
      begin_marker.cols() != em.cols() || end_marker.cols() != em.cols())
    throw DimensionError("marker rows must be [1 x " +
                         std::to_string(em.cols()) + "]");
  StreamSegment seg;
  seg.kind = kind;
  seg.tokens = concat_rows({begin_marker, em, end_marker});
  return seg;
}

namespace {

AssembledSequence build_sequence(const std::vector<StreamSegment>& segments,
                                 const Tensor& rag_block,
                                 const std::vector<int>& question_ids,
                                 const std::vector<int>& doc_ids,
                                 const Tensor& cot_block,
                                 const std::vector<int>& response_ids,
                                 const Tensor& vocab_embedding,
                                 bool include_tail) {
  int last_kind = -1;
  for (const auto& seg : segments) {
    const int k = static_cast<int>(seg.kind);
    if (k == last_kind)
      throw LayoutError(std::string("duplicate stream segment: ") +
                        stream_name(seg.kind));
    if (k < last_kind)
      throw LayoutError(std::string("stream segment out of order: ") +
                        stream_name(seg.kind));
    last_kind = k;
  }

  AssembledSequence out;
  std::vector<Tensor> parts;
  auto push_span = [&](const std::string& name, const Tensor& block,
                       const std::vector<int>& ids, bool masked) {
    Span span{name, out.ids.size(), block.rows()};
    parts.push_back(block);
    for (std::size_t i = 0; i < block.rows(); ++i) {
      out.ids.push_back(i < ids.size() ? ids[i] : 0);
      out.loss_mask.push_back(masked ? 1 : 0);
    }
    out.layout.push_back(span);
  };
  const std::vector<int> no_ids;

  for (const auto& seg : segments)
    push_span(stream_name(seg.kind), seg.tokens, no_ids, false);
  if (!rag_block.empty()) push_span("rag", rag_block, no_ids, false);

  const std::vector<int> bos{data::Vocab::kBos};
  push_span("bos", embed_rows(vocab_embedding, bos), bos, false);
  if (!question_ids.empty())
    push_span("question", embed_rows(vocab_embedding, question_ids),
              question_ids, false);
  if (!doc_ids.empty())
    push_span("doc", embed_rows(vocab_embedding, doc_ids), doc_ids, false);
  if (!cot_block.empty()) push_span("cot", cot_block, no_ids, false);
  if (include_tail) {
    if (!response_ids.empty())
      push_span("response", embed_rows(vocab_embedding, response_ids),
                response_ids, true);
    const std::vector<int> cos{data::Vocab::kCos};
    push_span("cos", embed_rows(vocab_embedding, cos), cos, true);
  }

  out.embeddings = concat_rows(parts);
  return out;
}

}  // namespace

AssembledSequence assemble(const std::vector<StreamSegment>& segments,
                           const Tensor& rag_block,
                           const std::vector<int>& question_ids,
                           const std::vector<int>& doc_ids,
                           const Tensor& cot_block,
                           const std::vector<int>& response_ids,
                           const Tensor& vocab_embedding) {
  return build_sequence(segments, rag_block, question_ids, doc_ids, cot_block,
                        response_ids, vocab_embedding, true);
}

AssembledSequence assemble_prefix(const std::vector<StreamSegment>& segments,
                                  const Tensor& rag_block,
                                  const std::vector<int>& question_ids,
                                  const std::vector<int>& doc_ids,
                                  const Tensor& cot_block,
                                  const Tensor& vocab_embedding) {
  return build_sequence(segments, rag_block, question_ids, doc_ids, cot_block,
                        {}, vocab_embedding, false);
}

}  // namespace cabin::streams
