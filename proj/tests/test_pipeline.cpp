#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>

#include "cabin/chain.hpp"
#include "cabin/pipeline.hpp"
#include "cabin/rag.hpp"
#include "cabin/streams.hpp"
#include "doctest.h"
#include "util.hpp"

using namespace cabin;
using namespace cabin::num;
using testutil::bit_equal;
using testutil::fixed_weights;
using testutil::random_tensor;
using testutil::weighted_sum;

namespace {

// Small geometry shared by the pipeline cases; everything still passes full
// config validation so stride chains resolve exactly.
Config small_config() {
  Config cfg;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.max_seq_len = 160;
  cfg.visual_tokens_per_stream = 2;
  cfg.feature_dim = 8;
  cfg.patch_size = 4;
  cfg.frames_per_clip = 2;
  cfg.frame_size = 8;
  cfg.max_sentence_len = 16;
  cfg.rag_tokens = 2;
  cfg.rag_strides = "auto";
  cfg.cot_length = 4;
  cfg.seed = 11;
  std::vector<std::string> problems;
  cfg.validate(problems);
  REQUIRE(problems.empty());
  return cfg;
}

data::Clip zero_clip(std::size_t frames, std::size_t hw, std::size_t ch) {
  data::Clip c;
  c.frames = frames;
  c.height = hw;
  c.width = hw;
  c.channels = ch;
  c.values.assign(frames * hw * hw * ch, 0.0f);
  return c;
}

streams::StreamSegment make_segment(StreamKind kind, const Tensor& interior,
                                    double marker_value) {
  Tensor begin(1, interior.cols());
  Tensor end(1, interior.cols());
  for (std::size_t j = 0; j < interior.cols(); ++j) {
    begin.at(0, j) = marker_value;
    end.at(0, j) = -marker_value;
  }
  return streams::wrap_with_markers(interior, kind, begin, end);
}

using streams::Span;

const Span* find_span(const streams::AssembledSequence& seq,
                      const std::string& name) {
  for (const auto& s : seq.layout)
    if (s.name == name) return &s;
  return nullptr;
}

}  // namespace

TEST_CASE("markers sandwich the projected tokens") {
  Rng rng(3);
  Tensor em = random_tensor(rng, 3, 4, -1, 1, false);
  Tensor begin = Tensor::from_values(1, 4, {1, 2, 3, 4});
  Tensor end = Tensor::from_values(1, 4, {5, 6, 7, 8});
  auto seg = streams::wrap_with_markers(em, StreamKind::Face, begin, end);
  CHECK(seg.kind == StreamKind::Face);
  REQUIRE(seg.tokens.rows() == 5);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(seg.tokens.at(0, j) == begin.at(0, j));
    CHECK(seg.tokens.at(4, j) == end.at(0, j));
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(seg.tokens.at(i + 1, j) == em.at(i, j));
  }
}

TEST_CASE("assembled layout is ordered, disjoint, and complete") {
  const std::size_t c = 6;
  Rng rng(5);
  std::vector<streams::StreamSegment> segments;
  for (int k = 0; k < kNumStreamKinds; ++k)
    segments.push_back(make_segment(static_cast<StreamKind>(k),
                                    random_tensor(rng, 2, c, -1, 1, false),
                                    1.0 + k));
  Tensor vocab_emb = random_tensor(rng, 20, c, -1, 1, false);
  Tensor rag_block = random_tensor(rng, 3, c, -1, 1, false);
  Tensor cot_block = random_tensor(rng, 4, c, -1, 1, false);
  std::vector<int> q{7, 8, 9};
  std::vector<int> r{10, 11};

  auto seq = streams::assemble(segments, rag_block, q, {}, cot_block, r,
                               vocab_emb);
  const std::size_t s_total = 7 * 4 + 3 + 1 + 3 + 4 + 2 + 1;
  CHECK(seq.embeddings.rows() == s_total);
  CHECK(seq.embeddings.cols() == c);
  CHECK(seq.ids.size() == s_total);
  CHECK(seq.loss_mask.size() == s_total);

  // Spans tile [0, S) in order.
  std::size_t cursor = 0;
  for (const auto& span : seq.layout) {
    CHECK(span.start == cursor);
    cursor += span.len;
  }
  CHECK(cursor == s_total);

  // Segment spans carry the stream names in canonical order; no doc span
  // was requested.
  CHECK(seq.layout.front().name == "front");
  CHECK(find_span(seq, "rag") != nullptr);
  CHECK(find_span(seq, "doc") == nullptr);

  // Text spans embed through the vocabulary table and keep their ids.
  const Span* qs = find_span(seq, "question");
  REQUIRE(qs != nullptr);
  REQUIRE(qs->len == q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    CHECK(seq.ids[qs->start + i] == q[i]);
    for (std::size_t j = 0; j < c; ++j)
      CHECK(seq.embeddings.at(qs->start + i, j) == vocab_emb.at(q[i], j));
  }

  // Mask is true exactly on response tokens plus the final <cos>.
  const Span* rs = find_span(seq, "response");
  const Span* cs = find_span(seq, "cos");
  REQUIRE(rs != nullptr);
  REQUIRE(cs != nullptr);
  CHECK(cs->start + cs->len == s_total);
  CHECK(seq.ids[cs->start] == data::Vocab::kCos);
  std::size_t masked = 0;
  for (std::size_t i = 0; i < s_total; ++i)
    if (seq.loss_mask[i]) {
      ++masked;
      bool in_response = i >= rs->start && i < rs->start + rs->len;
      CHECK((in_response || i == cs->start));
    }
  CHECK(masked == r.size() + 1);

  // <bos> sits between the rag block and the question.
  const Span* bos = find_span(seq, "bos");
  REQUIRE(bos != nullptr);
  CHECK(bos->start == 7 * 4 + 3);
  CHECK(seq.ids[bos->start] == data::Vocab::kBos);
}

TEST_CASE("assemble_prefix stops after the chain block") {
  const std::size_t c = 6;
  Rng rng(6);
  std::vector<streams::StreamSegment> segments;
  for (int k = 0; k < kNumStreamKinds; ++k)
    segments.push_back(make_segment(static_cast<StreamKind>(k),
                                    random_tensor(rng, 2, c, -1, 1, false),
                                    0.5));
  Tensor vocab_emb = random_tensor(rng, 20, c, -1, 1, false);
  Tensor cot = random_tensor(rng, 4, c, -1, 1, false);
  std::vector<int> doc{4, 5, 6, 7, 8};

  auto prefix = streams::assemble_prefix(segments, Tensor(), {7, 8}, doc, cot,
                                         vocab_emb);
  CHECK(prefix.layout.back().name == "cot");
  CHECK(find_span(prefix, "rag") == nullptr);
  const Span* ds = find_span(prefix, "doc");
  REQUIRE(ds != nullptr);
  CHECK(ds->len == doc.size());
  CHECK(find_span(prefix, "response") == nullptr);
  CHECK(find_span(prefix, "cos") == nullptr);
  for (char m : prefix.loss_mask) CHECK(m == 0);
  CHECK(prefix.embeddings.rows() == 7 * 4 + 1 + 2 + 5 + 4);
}

TEST_CASE("assemble rejects out-of-order and duplicate segments") {
  const std::size_t c = 4;
  Rng rng(7);
  auto seg = [&](StreamKind k) {
    return make_segment(k, random_tensor(rng, 1, c, -1, 1, false), 1.0);
  };
  Tensor vocab_emb = random_tensor(rng, 12, c, -1, 1, false);
  Tensor cot = random_tensor(rng, 2, c, -1, 1, false);

  std::vector<streams::StreamSegment> swapped{seg(StreamKind::OutRGB),
                                              seg(StreamKind::FrontRGB)};
  CHECK_THROWS_AS(
      streams::assemble(swapped, Tensor(), {5}, {}, cot, {6}, vocab_emb),
      LayoutError);

  std::vector<streams::StreamSegment> doubled{seg(StreamKind::Face),
                                              seg(StreamKind::Face)};
  CHECK_THROWS_AS(
      streams::assemble(doubled, Tensor(), {5}, {}, cot, {6}, vocab_emb),
      LayoutError);
}

TEST_CASE("view encoding pools away patch and frame order") {
  Rng rng(9);
  const std::size_t patch = 4, hw = 8, frames = 2, d = 8;
  Tensor patch_w = random_tensor(rng, patch * patch * 3, d, -0.5, 0.5, false);
  Tensor deep_w = random_tensor(rng, d, d, -0.5, 0.5, false);

  data::Clip zero = zero_clip(frames, hw, 3);
  Tensor z = streams::encode_view(zero, patch_w, deep_w, patch);
  REQUIRE(z.rows() == 1);
  REQUIRE(z.cols() == d);
  for (std::size_t j = 0; j < d; ++j) CHECK(z.at(0, j) == 0.0);

  data::Clip a = zero_clip(frames, hw, 3);
  Rng fill(10);
  for (auto& v : a.values) v = static_cast<float>(fill.uniform());
  data::Clip reversed = a;
  const std::size_t frame_len = hw * hw * 3;
  std::copy(a.values.begin(), a.values.begin() + frame_len,
            reversed.values.begin() + frame_len);
  std::copy(a.values.begin() + frame_len, a.values.end(),
            reversed.values.begin());
  Tensor ea = streams::encode_view(a, patch_w, deep_w, patch);
  Tensor eb = streams::encode_view(reversed, patch_w, deep_w, patch);
  for (std::size_t j = 0; j < d; ++j)
    CHECK(ea.at(0, j) == doctest::Approx(eb.at(0, j)).epsilon(1e-12));
}

TEST_CASE("view encoding rejects bad geometry") {
  Rng rng(11);
  Tensor patch_w = random_tensor(rng, 4 * 4 * 3, 8, -1, 1, false);
  Tensor deep_w = random_tensor(rng, 8, 8, -1, 1, false);
  data::Clip odd = zero_clip(1, 10, 3);  // 10 % 4 != 0
  CHECK_THROWS_AS(streams::encode_view(odd, patch_w, deep_w, 4), ConfigError);
  data::Clip mono = zero_clip(1, 8, 1);
  CHECK_THROWS_AS(streams::encode_view(mono, patch_w, deep_w, 4),
                  ConfigError);
}

TEST_CASE("phys encoder shape and minimum length") {
  Rng rng(13);
  const std::size_t d = 8;
  Tensor conv1 = random_tensor(rng, 8, 7, -0.4, 0.4, false);
  Tensor conv2 = random_tensor(rng, d, 8 * 5, -0.4, 0.4, false);
  auto sig = data::generate_ppg(72.0, 8.0, 30.0, 0.05, 21);
  Tensor out = streams::encode_phys(sig, conv1, conv2);
  CHECK(out.rows() == 1);
  CHECK(out.cols() == d);
  for (std::size_t j = 0; j < d; ++j) CHECK(std::isfinite(out.at(0, j)));

  data::PhysSignal tiny;
  tiny.samples.assign(6, 0.1f);
  tiny.sample_rate = 30.0;
  CHECK_THROWS_AS(streams::encode_phys(tiny, conv1, conv2), SizeError);
}

TEST_CASE("gradients flow through the stream encoder stack") {
  Rng rng(15);
  const std::size_t patch = 2, hw = 4, d = 4, c = 4, l = 2;
  data::Clip clip = zero_clip(2, hw, 3);
  Rng fill(16);
  for (auto& v : clip.values) v = static_cast<float>(fill.uniform(-1, 1));

  Tensor patch_w = random_tensor(rng, patch * patch * 3, d, -0.7, 0.7);
  Tensor deep_w = random_tensor(rng, d, d, -0.7, 0.7);
  Tensor w1 = random_tensor(rng, d, c, -0.7, 0.7);
  Tensor w2 = random_tensor(rng, c, l * c, -0.7, 0.7);
  auto w = fixed_weights(l * c, 99);

  auto f = [&]() {
    Tensor feat = streams::encode_view(clip, patch_w, deep_w, patch);
    Tensor tokens = streams::project_to_language(feat, w1, w2, l, c);
    return weighted_sum(tokens, w);
  };
  double err = grad_check(f, {&patch_w, &deep_w, &w1, &w2}, 6);
  CHECK(err < 1e-6);
}

TEST_CASE("chunker splits sentences and keeps terminators") {
  auto doc = rag::chunk_document(
      "i like quiet drives. warn me early!  is that ok?   ");
  REQUIRE(doc.sentences.size() == 3);
  CHECK(doc.sentences[0] == "i like quiet drives.");
  CHECK(doc.sentences[1] == "warn me early!");
  CHECK(doc.sentences[2] == "is that ok?");

  CHECK_THROWS_AS(rag::chunk_document("   "), DataError);
  CHECK_THROWS_AS(rag::chunk_document(". . ."), DataError);

  std::string many;
  for (int i = 0; i < 40; ++i) many += "sentence number " + std::to_string(i) + ". ";
  CHECK(rag::chunk_document(many).sentences.size() == rag::kMaxChunks);
}

TEST_CASE("tokenize_pad pads and truncates to M") {
  rag::PreferenceDocument doc;
  doc.sentences = {"please warn me early.",
                   "one two three four five six seven eight nine ten."};
  auto chunks = rag::tokenize_pad(doc, data::Vocab::shared(), 8);
  REQUIRE(chunks.ids.size() == 2);
  CHECK(chunks.ids[0].size() == 8);
  CHECK(chunks.lengths[0] == 5);
  for (std::size_t i = chunks.lengths[0]; i < 8; ++i)
    CHECK(chunks.ids[0][i] == data::Vocab::kPad);
  CHECK(chunks.lengths[1] == 8);  // 11 tokens truncated to M
}

namespace {

// Encodes a document with a fresh seeded parameter set; shared by the
// retrieval property cases.
struct RagRig {
  std::size_t m = 8, k = 2, c = 6, kernel = 2;
  Tensor embed;
  std::vector<Tensor> convs;
  std::vector<std::size_t> strides;

  explicit RagRig(std::uint64_t seed) {
    Rng rng(seed);
    const auto& vocab = data::Vocab::shared();
    embed = random_tensor(rng, vocab.size(), c, -0.8, 0.8);
    for (int i = 0; i < 4; ++i)
      convs.push_back(random_tensor(rng, c, c * kernel, -0.8, 0.8));
    strides = solve_strides(m, k, 4, kernel);
    REQUIRE(!strides.empty());
  }

  rag::EncodedChunks encode(const std::string& text) {
    auto doc = rag::chunk_document(text);
    auto chunks = rag::tokenize_pad(doc, data::Vocab::shared(), m);
    return rag::encode_chunks(chunks, embed, convs, kernel, strides);
  }
};

}  // namespace

TEST_CASE("single chunk retrieves with weight one") {
  RagRig rig(31);
  auto enc = rig.encode("warn me early.");
  REQUIRE(enc.tokens.size() == 1);
  CHECK(enc.keys.rows() == 1);
  Rng rng(32);
  Tensor q = random_tensor(rng, 1, rig.c, -1, 1, false);
  auto out = rag::retrieve(q, enc, 0.5);
  CHECK(out.weights.rows() == 1);
  CHECK(out.weights.cols() == 1);
  CHECK(out.weights.at(0, 0) == 1.0);
  CHECK(out.tokens.rows() == rig.k);
  for (std::size_t i = 0; i < rig.k; ++i)
    for (std::size_t j = 0; j < rig.c; ++j)
      CHECK(out.tokens.at(i, j) ==
            doctest::Approx(enc.tokens[0].at(i, j)).epsilon(1e-12));
}

TEST_CASE("identical chunks share weight uniformly") {
  RagRig rig(33);
  auto enc = rig.encode("warn me early. warn me early. warn me early.");
  REQUIRE(enc.tokens.size() == 3);
  Rng rng(34);
  Tensor q = random_tensor(rng, 1, rig.c, -1, 1, false);
  auto out = rag::retrieve(q, enc, 0.7);
  double sum = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(out.weights.at(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    sum += out.weights.at(0, j);
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("retrieval is equivariant under sentence permutation") {
  RagRig rig(35);
  auto fwd = rig.encode("keep alerts short. i drive at night often. avoid small talk.");
  auto rev = rig.encode("avoid small talk. i drive at night often. keep alerts short.");
  Rng rng(36);
  Tensor q = random_tensor(rng, 1, rig.c, -1, 1, false);
  auto out_f = rag::retrieve(q, fwd, 0.5);
  auto out_r = rag::retrieve(q, rev, 0.5);
  CHECK(out_f.weights.at(0, 0) ==
        doctest::Approx(out_r.weights.at(0, 2)).epsilon(1e-12));
  CHECK(out_f.weights.at(0, 1) ==
        doctest::Approx(out_r.weights.at(0, 1)).epsilon(1e-12));
  CHECK(out_f.weights.at(0, 2) ==
        doctest::Approx(out_r.weights.at(0, 0)).epsilon(1e-12));
  for (std::size_t i = 0; i < rig.k; ++i)
    for (std::size_t j = 0; j < rig.c; ++j)
      CHECK(out_f.tokens.at(i, j) ==
            doctest::Approx(out_r.tokens.at(i, j)).epsilon(1e-9));
}

TEST_CASE("doubling the whole document leaves the mix unchanged") {
  RagRig rig(37);
  std::string base = "keep alerts short. i drive at night often.";
  auto once = rig.encode(base);
  auto twice = rig.encode(base + " " + base);
  Rng rng(38);
  Tensor q = random_tensor(rng, 1, rig.c, -1, 1, false);
  auto out1 = rag::retrieve(q, once, 0.5);
  auto out2 = rag::retrieve(q, twice, 0.5);
  for (std::size_t i = 0; i < rig.k; ++i)
    for (std::size_t j = 0; j < rig.c; ++j)
      CHECK(out1.tokens.at(i, j) ==
            doctest::Approx(out2.tokens.at(i, j)).epsilon(1e-6));
}

TEST_CASE("low temperature concentrates the retrieval weights") {
  RagRig rig(39);
  auto enc = rig.encode(
      "keep alerts short. i drive at night often. avoid small talk. "
      "music stays off.");
  Rng rng(40);
  Tensor q = random_tensor(rng, 1, rig.c, -1, 1, false);
  auto sharp = rag::retrieve(q, enc, 1e-3);
  auto flat = rag::retrieve(q, enc, 10.0);
  auto max_weight = [](const Tensor& w) {
    double best = 0;
    for (std::size_t j = 0; j < w.cols(); ++j)
      best = std::max(best, w.at(0, j));
    return best;
  };
  CHECK(max_weight(sharp.weights) > 0.99);
  CHECK(max_weight(flat.weights) < max_weight(sharp.weights));
  CHECK_THROWS_AS(rag::retrieve(q, enc, 0.0), ConfigError);
}

TEST_CASE("retrieval gradients reach the embedding and convs") {
  RagRig rig(41);
  Rng rng(42);
  Tensor q = random_tensor(rng, 1, rig.c, -1, 1);
  auto w_tok = fixed_weights(rig.k * rig.c, 43);

  auto f = [&]() {
    auto enc = rig.encode("warn me early. keep alerts short. music off.");
    auto out = rag::retrieve(q, enc, 0.5);
    return weighted_sum(out.tokens, w_tok);
  };
  std::vector<Tensor*> leaves{&rig.embed, &q};
  for (auto& conv : rig.convs) leaves.push_back(&conv);
  double err = grad_check(f, leaves, 4);
  CHECK(err < 1e-6);
}

TEST_CASE("zero inputs give a zero chain block") {
  const std::size_t c = 6, kernel = 2;
  std::vector<streams::StreamSegment> segments;
  for (int k = 0; k < 3; ++k) {
    streams::StreamSegment seg;
    seg.kind = static_cast<StreamKind>(k);
    seg.tokens = Tensor(4, c);
    segments.push_back(seg);
  }
  Rng rng(51);
  std::vector<Tensor> convs{random_tensor(rng, c, c * kernel, -1, 1, false),
                            random_tensor(rng, c, c * kernel, -1, 1, false)};
  auto strides = solve_strides(12, 4, 2, kernel);
  REQUIRE(!strides.empty());
  Tensor cot =
      chain::fuse_to_cot(segments, Tensor(), convs, kernel, strides, true);
  REQUIRE(cot.rows() == 4);
  REQUIRE(cot.cols() == c);
  for (std::size_t i = 0; i < cot.size(); ++i) CHECK(cot.data()[i] == 0.0);
  CHECK(chain::lce_loss(cot).item() == 0.0);
}

TEST_CASE("eliciting loss is the mean absolute value, negated") {
  Tensor cot = Tensor::from_values(2, 2, {1.0, -2.0, 0.25, -0.25});
  CHECK(chain::lce_loss(cot).item() == -0.875);
  Tensor one = Tensor::from_values(1, 1, {3.0});
  CHECK(chain::lce_loss(one).item() == -3.0);
}

TEST_CASE("bounded chains stay inside [-1, 1]") {
  const std::size_t c = 6, kernel = 2;
  Rng rng(53);
  std::vector<streams::StreamSegment> segments;
  for (int k = 0; k < 3; ++k) {
    streams::StreamSegment seg;
    seg.kind = static_cast<StreamKind>(k);
    seg.tokens = random_tensor(rng, 4, c, -5, 5, false);
    segments.push_back(seg);
  }
  std::vector<Tensor> convs{random_tensor(rng, c, c * kernel, -2, 2, false),
                            random_tensor(rng, c, c * kernel, -2, 2, false)};
  auto strides = solve_strides(12, 4, 2, kernel);
  Tensor cot =
      chain::fuse_to_cot(segments, Tensor(), convs, kernel, strides, true);
  for (std::size_t i = 0; i < cot.size(); ++i) {
    CHECK(cot.data()[i] <= 1.0);
    CHECK(cot.data()[i] >= -1.0);
  }
  double lce = chain::lce_loss(cot).item();
  CHECK(lce <= 0.0);
  CHECK(lce >= -1.0);

  CHECK_THROWS_AS(chain::fuse_to_cot({}, Tensor(), convs, kernel, strides,
                                     true),
                  LayoutError);
}

TEST_CASE("diagnostics follow the degenerate-variance conventions") {
  // Two identical constant rows correlate perfectly; a constant row against
  // a varying one scores zero.
  Tensor flat = Tensor::from_values(2, 3, {2, 2, 2, 2, 2, 2});
  auto d_flat = chain::diagnostics(flat);
  CHECK(d_flat.mean_abs_pearson == 1.0);
  CHECK(d_flat.mean_range == 0.0);
  CHECK(d_flat.mean_abs_value == 2.0);

  Tensor mixed = Tensor::from_values(2, 3, {2, 2, 2, 1, 2, 3});
  CHECK(chain::diagnostics(mixed).mean_abs_pearson == 0.0);

  Tensor corr = Tensor::from_values(2, 3, {1, 2, 3, 2, 4, 6});
  CHECK(chain::diagnostics(corr).mean_abs_pearson ==
        doctest::Approx(1.0).epsilon(1e-12));
  Tensor anti = Tensor::from_values(2, 3, {1, 2, 3, -1, -2, -3});
  CHECK(chain::diagnostics(anti).mean_abs_pearson ==
        doctest::Approx(1.0).epsilon(1e-12));

  Tensor two = Tensor::from_values(2, 2, {0, 4, 1, 1});
  auto d = chain::diagnostics(two);
  // Column ranges are |0-1|=1 and |4-1|=3.
  REQUIRE(d.per_dim_range.size() == 2);
  CHECK(d.per_dim_range[0] == 1.0);
  CHECK(d.per_dim_range[1] == 3.0);
  CHECK(d.mean_range == 2.0);
  CHECK(d.mean_abs_value == 1.5);

  CHECK_THROWS_AS(chain::diagnostics(Tensor()), SizeError);
}

TEST_CASE("pearson is scale-invariant, ranges are not") {
  Rng rng(55);
  Tensor cot = random_tensor(rng, 4, 6, -1, 1, false);
  auto a = chain::diagnostics(cot);
  auto b = chain::diagnostics(scale(cot, 3.0));
  CHECK(a.mean_abs_pearson == doctest::Approx(b.mean_abs_pearson).epsilon(1e-12));
  CHECK(b.mean_range == doctest::Approx(3.0 * a.mean_range).epsilon(1e-12));
  CHECK(b.mean_abs_value ==
        doctest::Approx(3.0 * a.mean_abs_value).epsilon(1e-12));

  auto cmp = chain::compare_runs(a, b);
  CHECK(cmp.d_range < 0.0);
  CHECK(cmp.summary.find("range:-") != std::string::npos);

  chain::CotDiagnostics narrow;
  narrow.per_dim_range.assign(3, 0.0);
  CHECK_THROWS_AS(chain::compare_runs(a, narrow), ConfigError);
}

TEST_CASE("copilot initialization is deterministic and mode-independent") {
  Config cfg = small_config();
  pipeline::Copilot a(cfg);
  pipeline::Copilot b(cfg);
  REQUIRE(a.params().entries().size() == b.params().entries().size());
  for (std::size_t i = 0; i < a.params().entries().size(); ++i) {
    const auto& ea = a.params().entries()[i];
    const auto& eb = b.params().entries()[i];
    CHECK(ea.name == eb.name);
    CHECK(ea.trainable == eb.trainable);
    CHECK(bit_equal(ea.tensor, eb.tensor));
  }

  Config lt = cfg;
  lt.mode = "longtext";
  pipeline::Copilot c(lt);
  REQUIRE(c.params().entries().size() == a.params().entries().size());
  for (std::size_t i = 0; i < a.params().entries().size(); ++i)
    CHECK(bit_equal(a.params().entries()[i].tensor,
                    c.params().entries()[i].tensor));
  // Same parameters, different fuser geometry: the retrieved block and the
  // document path contribute different input lengths.
  CHECK(lt.fuser_input_len() != cfg.fuser_input_len());
  CHECK(c.fuser_strides().size() == a.fuser_strides().size());

  // The phys encoder is the only frozen part.
  for (const auto& e : a.params().entries())
    CHECK(e.trainable == (e.name.rfind("phys.", 0) != 0));
}

TEST_CASE("encode_record emits canonical marker-wrapped segments") {
  Config cfg = small_config();
  pipeline::Copilot net(cfg);
  auto rec = data::generate_scene(cfg, cfg.seed, 0);
  auto segments = net.encode_record(rec);
  REQUIRE(segments.size() == 7);
  for (int k = 0; k < 7; ++k) {
    CHECK(segments[k].kind == static_cast<StreamKind>(k));
    CHECK(segments[k].tokens.rows() == cfg.visual_tokens_per_stream + 2);
    CHECK(segments[k].tokens.cols() == cfg.d_model);
    const std::string name = stream_name(static_cast<StreamKind>(k));
    const Tensor& begin = net.params().get("marker." + name + ".begin");
    for (std::size_t j = 0; j < cfg.d_model; ++j)
      CHECK(segments[k].tokens.at(0, j) == begin.at(0, j));
  }
}

TEST_CASE("visual query pools interiors and skips markers") {
  const std::size_t c = 4;
  Config cfg = small_config();
  pipeline::Copilot net(cfg);
  (void)net;
  std::vector<streams::StreamSegment> segments;
  for (int k = 0; k < 2; ++k) {
    Tensor interior(2, c);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < c; ++j)
        interior.at(i, j) = static_cast<double>(k + 1);
    segments.push_back(
        make_segment(static_cast<StreamKind>(k), interior, 1e3));
  }
  Tensor q = net.visual_query(segments);
  REQUIRE(q.rows() == 1);
  REQUIRE(q.cols() == c);
  // Interiors are all-1 and all-2 rows; markers at +-1e3 must not leak in.
  for (std::size_t j = 0; j < c; ++j)
    CHECK(q.at(0, j) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("build assembles mode-specific sequences") {
  Config cfg = small_config();
  auto rec = data::generate_scene(cfg, cfg.seed, 0);
  auto profile = data::make_profile(cfg, cfg.seed, 0);
  std::string doc = data::render_pref_doc(profile);
  std::string body = doc.substr(doc.find('\n') + 1);
  data::Sample sample{std::make_shared<data::SceneRecord>(rec),
                      data::build_qa(rec, data::Task::Scene, cfg.seed),
                      profile.user_id};

  pipeline::Copilot net(cfg);
  auto built = net.build(sample, body, false);
  CHECK(find_span(built.seq, "rag") != nullptr);
  CHECK(find_span(built.seq, "doc") == nullptr);
  CHECK(built.dropped_doc_tokens == 0);
  CHECK(built.cot.rows() == cfg.cot_length);
  CHECK(built.seq.layout.back().name == "cos");
  const Span* rs = find_span(built.seq, "response");
  REQUIRE(rs != nullptr);
  CHECK(rs->len == data::Vocab::shared().encode(sample.qa.answer).size());

  auto prefix = net.build(sample, body, true);
  CHECK(prefix.seq.layout.back().name == "cot");

  Config lt = cfg;
  lt.mode = "longtext";
  pipeline::Copilot lnet(lt);
  auto lbuilt = lnet.build(sample, body, false);
  CHECK(find_span(lbuilt.seq, "rag") == nullptr);
  const Span* ds = find_span(lbuilt.seq, "doc");
  REQUIRE(ds != nullptr);
  CHECK(ds->len == data::Vocab::shared().encode(body).size());
  CHECK(lbuilt.dropped_doc_tokens == 0);

  // A context window too small for the document truncates and counts.
  Config tight = lt;
  tight.max_seq_len = lbuilt.seq.embeddings.rows() - 4;
  pipeline::Copilot tnet(tight);
  auto tbuilt = tnet.build(sample, body, false);
  CHECK(tbuilt.dropped_doc_tokens == 4);
  CHECK(tbuilt.seq.embeddings.rows() == tight.max_seq_len);
}

TEST_CASE("linear probe separates the label families at small scale") {
  // An 8x8 frame squeezes the two outside-view bands into the same patches,
  // which genuinely caps scene and condition below 0.7; keep the default
  // frame so the render patterns survive pooling, shrink everything else.
  Config cfg = small_config();
  cfg.frame_size = 16;
  std::vector<std::string> problems;
  cfg.validate(problems);
  REQUIRE(problems.empty());
  auto acc = pipeline::linear_probe(cfg, 150, 77);
  REQUIRE(acc.size() == 6);
  for (const auto& [family, a] : acc) {
    CAPTURE(family);
    CHECK(a > 0.85);
  }
}
