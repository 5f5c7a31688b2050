#include "cabin/pipeline.hpp"

#include <cmath>

#include "cabin/random.hpp"

namespace cabin::pipeline {

using namespace cabin::num;

namespace {

constexpr std::size_t kPhysConv1Out = 8;
constexpr std::size_t kPhysKw1 = 7;
constexpr std::size_t kPhysKw2 = 5;

}  // namespace

Copilot::Copilot(const Config& cfg) : cfg_(cfg) {
  std::vector<std::string> problems;
  cfg_.validate(problems);
  if (!problems.empty()) {
    std::string joined;
    for (const auto& p : problems) joined += (joined.empty() ? "" : "; ") + p;
    throw ConfigError(joined);
  }
  rag_strides_ = resolve_strides(cfg_.rag_strides, cfg_.max_sentence_len,
                                 cfg_.rag_tokens, 4, cfg_.rag_kernel, "rag");
  fuser_strides_ =
      resolve_strides(cfg_.fuser_strides, cfg_.fuser_input_len(),
                      cfg_.cot_length, 2, cfg_.fuser_kernel, "fuser");
  register_params();
  init_params();
}

void Copilot::register_params() {
  const std::size_t c = cfg_.d_model;
  const std::size_t d = cfg_.feature_dim;
  const std::size_t l = cfg_.visual_tokens_per_stream;
  const std::size_t v = data::Vocab::shared().size();
  const std::size_t p2 = cfg_.patch_size * cfg_.patch_size;

  params_.add("vocab.embed", v, c);
  params_.add("pos.embed", cfg_.max_seq_len, c);
  for (int k = 0; k < kNumStreamKinds; ++k) {
    const std::string name = stream_name(static_cast<StreamKind>(k));
    params_.add("marker." + name + ".begin", 1, c);
    params_.add("marker." + name + ".end", 1, c);
  }
  params_.add("patch.rgb", p2 * 3, d);
  params_.add("patch.nir", p2, d);
  params_.add("patch.depth", p2, d);
  params_.add("streams.deep", d, d);
  for (int k = 0; k < kNumStreamKinds; ++k) {
    const std::string name = stream_name(static_cast<StreamKind>(k));
    params_.add("proj." + name + ".w1", d, c);
    params_.add("proj." + name + ".w2", c, l * c);
  }
  params_.add("phys.conv1", kPhysConv1Out, kPhysKw1, /*trainable=*/false);
  params_.add("phys.conv2", d, kPhysConv1Out * kPhysKw2, /*trainable=*/false);

  params_.add("rag.embed", v, c);
  for (int i = 0; i < 4; ++i)
    params_.add("rag.conv" + std::to_string(i), c, c * cfg_.rag_kernel);
  for (int i = 0; i < 2; ++i)
    params_.add("chain.conv" + std::to_string(i), c, c * cfg_.fuser_kernel);

  for (std::size_t layer = 0; layer < cfg_.n_layers; ++layer) {
    const std::string p = "layer" + std::to_string(layer) + ".";
    params_.add(p + "ln1.gain", 1, c);
    params_.add(p + "ln1.bias", 1, c);
    params_.add(p + "attn.wq", c, c);
    params_.add(p + "attn.wk", c, c);
    params_.add(p + "attn.wv", c, c);
    params_.add(p + "attn.wo", c, c);
    params_.add(p + "ln2.gain", 1, c);
    params_.add(p + "ln2.bias", 1, c);
    params_.add(p + "mlp.w1", c, 4 * c);
    params_.add(p + "mlp.b1", 1, 4 * c);
    params_.add(p + "mlp.w2", 4 * c, c);
    params_.add(p + "mlp.b2", 1, c);
  }
  params_.add("final.ln.gain", 1, c);
  params_.add("final.ln.bias", 1, c);
  params_.add("out.weight", c, v);
  params_.add("out.bias", 1, v);
}

void Copilot::init_params() {
  // One stream over all parameters in registration order; layer-norm gains
  // are 1, every bias 0, everything else a scaled normal draw. The chain
  // fuser gets its own smaller scale so early chains stay non-degenerate.
  Rng rng(Rng::mix(cfg_.seed, 777));
  for (auto& entry : params_.entries()) {
    const std::string& name = entry.name;
    Tensor& t = entry.tensor;
    const bool is_gain = name.size() >= 4 && name.substr(name.size() - 4) == "gain";
    const bool is_bias = (name.size() >= 4 && name.substr(name.size() - 4) == "bias") ||
                         name == "out.bias" ||
                         name.find(".b1") != std::string::npos ||
                         name.find(".b2") != std::string::npos;
    if (is_gain) {
      for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = 1.0;
      continue;
    }
    if (is_bias) continue;  // zero-initialized already
    const double s = name.rfind("chain.conv", 0) == 0 ? cfg_.fuser_init_scale
                                                      : cfg_.init_scale;
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = s * rng.normal();
  }
  // Pad rows embed to zero so an all-padding sentence stays silent at init.
  Tensor& rag_embed = params_.get("rag.embed");
  for (std::size_t j = 0; j < rag_embed.cols(); ++j)
    rag_embed.at(data::Vocab::kPad, j) = 0.0;
}

std::vector<streams::StreamSegment> Copilot::encode_record(
    const data::SceneRecord& rec) {
  const std::size_t l = cfg_.visual_tokens_per_stream;
  const std::size_t c = cfg_.d_model;
  const Tensor& deep = params_.get("streams.deep");
  std::vector<streams::StreamSegment> segments;
  for (const auto& name : cfg_.stream_names()) {
    const StreamKind kind = stream_from_name(name);
    Tensor feature;
    switch (kind) {
      case StreamKind::FrontRGB:
      case StreamKind::OutRGB:
      case StreamKind::Face:
      case StreamKind::Hand:
        feature = streams::encode_view(rec.clips[static_cast<int>(kind)],
                                       params_.get("patch.rgb"), deep,
                                       cfg_.patch_size);
        break;
      case StreamKind::NIR:
        feature = streams::encode_modality(rec.clips[static_cast<int>(kind)],
                                           params_.get("patch.nir"), deep,
                                           cfg_.patch_size);
        break;
      case StreamKind::Depth:
        feature = streams::encode_modality(rec.clips[static_cast<int>(kind)],
                                           params_.get("patch.depth"), deep,
                                           cfg_.patch_size);
        break;
      case StreamKind::Phys:
        feature = streams::encode_phys(rec.phys, params_.get("phys.conv1"),
                                       params_.get("phys.conv2"));
        break;
    }
    Tensor em = streams::project_to_language(
        feature, params_.get("proj." + name + ".w1"),
        params_.get("proj." + name + ".w2"), l, c);
    segments.push_back(streams::wrap_with_markers(
        em, kind, params_.get("marker." + name + ".begin"),
        params_.get("marker." + name + ".end")));
  }
  return segments;
}

Tensor Copilot::visual_query(
    const std::vector<streams::StreamSegment>& segments) {
  std::vector<Tensor> rows;
  for (const auto& seg : segments)
    rows.push_back(slice_rows(seg.tokens, 1, seg.tokens.rows() - 2));
  return mean_rows(concat_rows(rows));
}

rag::RagOutput Copilot::retrieve_for(const std::string& doc_body,
                                     const Tensor& query) {
  auto doc = rag::chunk_document(doc_body);
  auto chunks =
      rag::tokenize_pad(doc, data::Vocab::shared(), cfg_.max_sentence_len);
  std::vector<Tensor> convs;
  for (int i = 0; i < 4; ++i)
    convs.push_back(params_.get("rag.conv" + std::to_string(i)));
  auto encoded = rag::encode_chunks(chunks, params_.get("rag.embed"), convs,
                                    cfg_.rag_kernel, rag_strides_);
  return rag::retrieve(query, encoded, cfg_.rag_temperature);
}

Copilot::Built Copilot::build(const data::Sample& sample,
                              const std::string& doc_body,
                              bool for_generation) {
  Built out;
  auto segments = encode_record(*sample.record);
  const auto& vocab = data::Vocab::shared();
  std::vector<int> question_ids = vocab.encode(sample.qa.question);
  std::vector<int> response_ids = vocab.encode(sample.qa.answer);

  Tensor rag_block;
  std::vector<int> doc_ids;
  if (cfg_.mode == "rag") {
    rag_block = retrieve_for(doc_body, visual_query(segments)).tokens;
  } else {
    doc_ids = vocab.encode(doc_body);
    // Keep the full assembly inside the context window by dropping document
    // tail tokens; everything else is fixed-size.
    const std::size_t fixed = cfg_.fuser_input_len() + 1 +
                              question_ids.size() + cfg_.cot_length +
                              (for_generation ? 0 : response_ids.size() + 1);
    const std::size_t budget =
        cfg_.max_seq_len > fixed ? cfg_.max_seq_len - fixed : 0;
    if (doc_ids.size() > budget) {
      out.dropped_doc_tokens = doc_ids.size() - budget;
      doc_ids.resize(budget);
    }
  }

  std::vector<Tensor> convs{params_.get("chain.conv0"),
                            params_.get("chain.conv1")};
  out.cot = chain::fuse_to_cot(segments, rag_block, convs, cfg_.fuser_kernel,
                               fuser_strides_, cfg_.cot_bounded);

  const Tensor& vocab_embed = params_.get("vocab.embed");
  out.seq = for_generation
                ? streams::assemble_prefix(segments, rag_block, question_ids,
                                           doc_ids, out.cot, vocab_embed)
                : streams::assemble(segments, rag_block, question_ids, doc_ids,
                                    out.cot, response_ids, vocab_embed);
  return out;
}

StreamKind probe_stream(const std::string& family) {
  if (family == "emotion") return StreamKind::Face;
  if (family == "behavior") return StreamKind::FrontRGB;
  if (family == "gaze") return StreamKind::NIR;
  if (family == "hand") return StreamKind::Hand;
  if (family == "scene") return StreamKind::OutRGB;
  if (family == "condition") return StreamKind::OutRGB;
  throw DataError("no probe stream for label family: " + family);
}

namespace {

int label_of(const data::SceneRecord& rec, const std::string& family) {
  if (family == "emotion") return rec.emotion;
  if (family == "behavior") return rec.behavior;
  if (family == "gaze") return rec.gaze;
  if (family == "hand") return rec.hand;
  if (family == "scene") return rec.scene;
  if (family == "condition") return rec.condition;
  throw DataError("unknown label family: " + family);
}

std::size_t family_size(const std::string& family) {
  if (family == "emotion") return data::emotion_values().size();
  if (family == "behavior") return data::behavior_values().size();
  if (family == "gaze") return data::gaze_values().size();
  if (family == "hand") return data::hand_values().size();
  if (family == "scene") return data::scene_values().size();
  if (family == "condition") return data::condition_values().size();
  throw DataError("unknown label family: " + family);
}

}  // namespace

std::map<std::string, double> linear_probe(const Config& cfg,
                                           std::size_t n_records,
                                           std::uint64_t seed) {
  Copilot net(cfg);
  const std::size_t d = cfg.feature_dim;

  // Encoder features per stream kind, computed once per record.
  std::vector<data::SceneRecord> records;
  records.reserve(n_records);
  for (std::uint64_t id = 0; id < n_records; ++id)
    records.push_back(data::generate_scene(cfg, seed, id));

  std::map<std::string, double> accuracy;
  const std::vector<std::string> families{"emotion", "behavior", "gaze",
                                          "hand",    "scene",    "condition"};
  for (const auto& family : families) {
    const StreamKind kind = probe_stream(family);
    const std::string sname = stream_name(kind);
    Tensor features(n_records, d);
    std::vector<int> labels(n_records);
    {
      TapeScope no_tape(nullptr);
      for (std::size_t i = 0; i < n_records; ++i) {
        const auto& clip = records[i].clips[static_cast<int>(kind)];
        Tensor f =
            kind == StreamKind::NIR
                ? streams::encode_modality(clip, net.params().get("patch.nir"),
                                           net.params().get("streams.deep"),
                                           cfg.patch_size)
                : streams::encode_view(clip, net.params().get("patch.rgb"),
                                       net.params().get("streams.deep"),
                                       cfg.patch_size);
        for (std::size_t j = 0; j < d; ++j) features.at(i, j) = f.at(0, j);
        labels[i] = label_of(records[i], family);
      }
    }

    // Standardize each feature column: the encoders emit values with a large
    // shared mean and tiny spread, which leaves plain gradient descent badly
    // conditioned no matter the step size.
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n_records; ++i) mean += features.at(i, j);
      mean /= static_cast<double>(n_records);
      double var = 0.0;
      for (std::size_t i = 0; i < n_records; ++i) {
        const double c = features.at(i, j) - mean;
        var += c * c;
      }
      const double sd = std::sqrt(var / static_cast<double>(n_records));
      const double inv = 1.0 / std::max(sd, 1e-12);
      for (std::size_t i = 0; i < n_records; ++i)
        features.at(i, j) = (features.at(i, j) - mean) * inv;
    }

    // Full-batch softmax regression with heavy-ball momentum on the frozen
    // standardized features.
    const std::size_t classes = family_size(family);
    Tensor w(d, classes, true);
    Tensor b(1, classes, true);
    std::vector<double> vw(w.size(), 0.0), vb(b.size(), 0.0);
    const double lr = 2.0, momentum = 0.95;
    const std::vector<char> all(n_records, 1);
    for (int step = 0; step < 800; ++step) {
      Tape tape;
      TapeScope scope(&tape);
      w.zero_grad();
      b.zero_grad();
      Tensor logits = broadcast_add_row(matmul(features, w), b);
      Tensor loss = cross_entropy(logits, labels, all);
      tape.backward(loss);
      for (std::size_t i = 0; i < w.size(); ++i) {
        vw[i] = momentum * vw[i] - lr * w.grad_data()[i];
        w.data()[i] += vw[i];
      }
      for (std::size_t i = 0; i < b.size(); ++i) {
        vb[i] = momentum * vb[i] - lr * b.grad_data()[i];
        b.data()[i] += vb[i];
      }
    }

    TapeScope no_tape(nullptr);
    Tensor logits = broadcast_add_row(matmul(features, w), b);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n_records; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < classes; ++j)
        if (logits.at(i, j) > logits.at(i, best)) best = j;
      hits += (static_cast<int>(best) == labels[i]);
    }
    accuracy[family] = static_cast<double>(hits) / n_records;
  }
  return accuracy;
}

}  // namespace cabin::pipeline
