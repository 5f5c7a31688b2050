#pragma once

#include <map>
#include <string>
#include <vector>

#include "cabin/chain.hpp"
#include "cabin/config.hpp"
#include "cabin/dataset_io.hpp"
#include "cabin/model.hpp"
#include "cabin/rag.hpp"
#include "cabin/streams.hpp"

namespace cabin::pipeline {

using num::ParamStore;
using num::Tensor;

// The full network: every parameter of the stream encoders, retrieval
// module, chain fuser, and decoder, registered in one fixed order so
// initialization, updates, and checkpoints are reproducible byte for byte.
class Copilot {
 public:
  explicit Copilot(const Config& cfg);

  const Config& config() const { return cfg_; }
  ParamStore& params() { return params_; }

  // Encodes all six frame streams plus the phys signal into marker-wrapped
  // segments in canonical kind order.
  std::vector<streams::StreamSegment> encode_record(
      const data::SceneRecord& rec);

  // Retrieval query: mean over all segment token rows with the marker rows
  // excluded.
  Tensor visual_query(const std::vector<streams::StreamSegment>& segments);

  // Chunks, tokenizes, and encodes a preference document body, then
  // retrieves against the query.
  rag::RagOutput retrieve_for(const std::string& doc_body,
                              const Tensor& query);

  // One sample turned into model inputs under the configured mode. In rag
  // mode the document becomes the retrieved block; in longtext mode its
  // tokens are appended after the question (truncated to fit the context
  // window, counting dropped tokens).
  struct Built {
    streams::AssembledSequence seq;
    Tensor cot;
    std::size_t dropped_doc_tokens = 0;
  };
  Built build(const data::Sample& sample, const std::string& doc_body,
              bool for_generation);

  // Fixed stride chains resolved once from the config.
  const std::vector<std::size_t>& rag_strides() const { return rag_strides_; }
  const std::vector<std::size_t>& fuser_strides() const {
    return fuser_strides_;
  }

 private:
  Config cfg_;
  ParamStore params_;
  std::vector<std::size_t> rag_strides_;
  std::vector<std::size_t> fuser_strides_;

  void register_params();
  void init_params();
};

// Which stream carries a label family for probing purposes.
StreamKind probe_stream(const std::string& family);

// Trains a softmax probe on stub-encoder features of freshly generated
// records, one probe per label family, and returns family -> accuracy on
// those records. Certifies that the synthetic patterns stay separable
// through the (untrained, seeded) encoders.
std::map<std::string, double> linear_probe(const Config& cfg,
                                           std::size_t n_records,
                                           std::uint64_t seed);

}  // namespace cabin::pipeline
