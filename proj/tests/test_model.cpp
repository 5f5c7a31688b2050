#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cabin/chain.hpp"
#include "cabin/model.hpp"
#include "cabin/pipeline.hpp"
#include "cabin/train.hpp"
#include "cabin/vocab.hpp"
#include "doctest.h"

using namespace cabin;
using num::ParamStore;
using num::Tape;
using num::TapeScope;
using num::Tensor;

namespace {

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

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

std::string pref_body(const Config& cfg, std::size_t user_index) {
  std::string doc = data::render_pref_doc(data::make_profile(cfg, cfg.seed,
                                                             user_index));
  return doc.substr(doc.find('\n') + 1);
}

data::Sample make_sample(const Config& cfg, std::uint64_t id, data::Task task,
                         const std::string& user_id) {
  auto rec = std::make_shared<data::SceneRecord>(
      data::generate_scene(cfg, cfg.seed, id));
  return data::Sample{rec, data::build_qa(*rec, task, cfg.seed), user_id};
}

// Shared tiny training setup: two records, two tasks each, one user.
struct Bench {
  Config cfg;
  std::vector<data::Sample> samples;
  std::map<std::string, std::string> prefs;

  explicit Bench(const Config& c) : cfg(c) {
    auto profile = data::make_profile(cfg, cfg.seed, 0);
    prefs[profile.user_id] = pref_body(cfg, 0);
    for (std::uint64_t id = 0; id < 2; ++id) {
      samples.push_back(make_sample(cfg, id, data::Task::Decision,
                                    profile.user_id));
      samples.push_back(make_sample(cfg, id, data::Task::Emotion,
                                    profile.user_id));
    }
  }
};

std::vector<double> snapshot(ParamStore& params) {
  std::vector<double> all;
  for (const auto& e : params.entries())
    all.insert(all.end(), e.tensor.data(),
               e.tensor.data() + e.tensor.size());
  return all;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("forward is causal") {
  Config cfg = small_config();
  pipeline::Copilot net(cfg);
  Bench bench(cfg);
  auto built = net.build(bench.samples[0], bench.prefs.begin()->second, false);

  TapeScope no_tape(nullptr);
  Tensor base = model::forward(built.seq.embeddings, net.params(), cfg);

  const std::size_t j = built.seq.embeddings.rows() / 2;
  Tensor poked = built.seq.embeddings;
  for (std::size_t c = 0; c < poked.cols(); ++c) poked.at(j, c) += 0.25;
  Tensor out = model::forward(poked, net.params(), cfg);

  // Rows before the edit never see it; the edited row must react.
  for (std::size_t i = 0; i < j; ++i)
    for (std::size_t c = 0; c < base.cols(); ++c)
      REQUIRE(out.at(i, c) == base.at(i, c));
  bool changed = false;
  for (std::size_t c = 0; c < base.cols(); ++c)
    changed |= (out.at(j, c) != base.at(j, c));
  CHECK(changed);
}

TEST_CASE("forward rejects sequences beyond the context window") {
  Config cfg = small_config();
  pipeline::Copilot net(cfg);
  Tensor too_long(cfg.max_seq_len + 1, cfg.d_model);
  TapeScope no_tape(nullptr);
  CHECK_THROWS_AS(model::forward(too_long, net.params(), cfg), SizeError);
}

TEST_CASE("total_loss shifts targets and masks only the response span") {
  Config cfg = small_config();
  pipeline::Copilot net(cfg);
  Bench bench(cfg);
  const auto& body = bench.prefs.begin()->second;
  auto built = net.build(bench.samples[0], body, false);
  const auto& seq = built.seq;

  const double lambda = 0.3;
  Tape tape;
  TapeScope scope(&tape);
  auto loss = model::total_loss(seq, built.cot, net.params(), cfg, lambda);

  // Independent mask oracle: exactly the response span plus the final <cos>
  // are supervised.
  std::size_t masked = 0;
  for (char m : seq.loss_mask) masked += (m != 0);
  const streams::Span* rs = nullptr;
  for (const auto& sp : seq.layout)
    if (sp.name == "response") rs = &sp;
  REQUIRE(rs != nullptr);
  CHECK(masked == rs->len + 1);

  // Independent loss oracle: mean over supervised positions i of the
  // cross-entropy of logits row i-1 against token id i.
  TapeScope no_tape(nullptr);
  Tensor logits = model::forward(seq.embeddings, net.params(), cfg);
  long double acc = 0.0L;
  std::size_t count = 0;
  for (std::size_t i = 1; i < seq.ids.size(); ++i) {
    if (!seq.loss_mask[i]) continue;
    long double mx = logits.at(i - 1, 0);
    for (std::size_t v = 1; v < logits.cols(); ++v)
      mx = std::max<long double>(mx, logits.at(i - 1, v));
    long double denom = 0.0L;
    for (std::size_t v = 0; v < logits.cols(); ++v)
      denom += std::exp(static_cast<long double>(logits.at(i - 1, v)) - mx);
    const long double lp =
        static_cast<long double>(logits.at(i - 1, seq.ids[i])) - mx -
        std::log(denom);
    acc -= lp;
    ++count;
  }
  REQUIRE(count == masked);
  const double manual = static_cast<double>(acc / count);
  CHECK(std::abs(loss.lvi.at(0, 0) - manual) < 1e-9);

  // The weighted sum is exact, and lce matches the chain module's value.
  Tensor lce = chain::lce_loss(built.cot);
  CHECK(loss.lce_raw.at(0, 0) == lce.at(0, 0));
  CHECK(std::abs(loss.total.at(0, 0) -
                 (loss.lvi.at(0, 0) + lambda * loss.lce_raw.at(0, 0))) <
        1e-12);
}

TEST_CASE("total_loss without supervised positions returns zero lvi") {
  Config cfg = small_config();
  pipeline::Copilot net(cfg);
  Bench bench(cfg);
  auto prefix = net.build(bench.samples[0], bench.prefs.begin()->second, true);
  Tape tape;
  TapeScope scope(&tape);
  auto loss = model::total_loss(prefix.seq, prefix.cot, net.params(), cfg,
                                0.5);
  CHECK(loss.lvi.at(0, 0) == 0.0);
  CHECK(loss.total.at(0, 0) ==
        doctest::Approx(0.5 * loss.lce_raw.at(0, 0)).epsilon(1e-12));
}

TEST_CASE("generate is deterministic, bounded, and stops at the marker") {
  Config cfg = small_config();
  pipeline::Copilot net(cfg);
  Bench bench(cfg);
  const auto& body = bench.prefs.begin()->second;
  auto prefix = net.build(bench.samples[0], body, true);

  auto a = model::generate(prefix.seq, net.params(), cfg, 12);
  auto b = model::generate(prefix.seq, net.params(), cfg, 12);
  CHECK(a == b);
  CHECK(a.size() <= 12);
  const int vocab = static_cast<int>(data::Vocab::shared().size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] >= 0);
    CHECK(a[i] < vocab);
    // <cos> terminates decoding, so it can only be the last element.
    if (a[i] == data::Vocab::kCos) CHECK(i + 1 == a.size());
  }

  CHECK(model::generate(prefix.seq, net.params(), cfg, 0).empty());
}

TEST_CASE("generate stops when the context window is full") {
  Config cfg = small_config();
  pipeline::Copilot net(cfg);
  Bench bench(cfg);
  auto prefix = net.build(bench.samples[0], bench.prefs.begin()->second, true);

  Config tight = cfg;
  tight.max_seq_len = prefix.seq.embeddings.rows();
  CHECK(model::generate(prefix.seq, net.params(), tight, 8).empty());
}

TEST_CASE("sgd_step applies decoupled weight decay exactly") {
  Config cfg = small_config();
  pipeline::Copilot net(cfg);
  const double lr = 0.1, wd = 0.5;

  auto before = snapshot(net.params());
  for (auto& e : net.params().entries()) e.tensor.zero_grad();
  // One tensor gets a nonzero gradient so both update terms are exercised.
  Tensor& poked = net.params().get("vocab.embed");
  for (std::size_t i = 0; i < poked.size(); ++i) poked.grad_data()[i] = 0.25;

  train::sgd_step(net.params(), lr, wd);

  std::size_t off = 0;
  for (const auto& e : net.params().entries()) {
    for (std::size_t i = 0; i < e.tensor.size(); ++i) {
      const double p = before[off + i];
      const double g = (e.name == "vocab.embed") ? 0.25 : 0.0;
      const double want =
          e.trainable ? p * (1.0 - lr * wd) - lr * g : p;
      CHECK(e.tensor.data()[i] == want);
    }
    off += e.tensor.size();
  }
}

TEST_CASE("train honors max_steps and logs the documented columns") {
  Config cfg = small_config();
  cfg.max_steps = 3;
  Bench bench(cfg);
  pipeline::Copilot net(cfg);

  auto state = train::TrainState::fresh(cfg.seed);
  auto log = train::train(net, bench.samples, bench.prefs, state);

  CHECK(log.steps_run == 3);
  CHECK(state.step == 3);
  CHECK(log.loss_csv.rfind("step,epoch,lvi,lce,total", 0) == 0);
  CHECK(log.diag_csv.rfind(
            "step,lambda,cot_length,mean_abs_pearson,mean_range,"
            "mean_abs_value",
            0) == 0);

  // A zero learning rate is a config problem, not a silent no-op.
  Config bad = small_config();
  bad.lr = 0.0;
  std::vector<std::string> problems;
  bad.validate(problems);
  CHECK(!problems.empty());
}

TEST_CASE("seeded training is bit-reproducible") {
  Config cfg = small_config();
  cfg.lr = 0.01;
  cfg.max_steps = 4;
  Bench bench(cfg);

  pipeline::Copilot a(cfg), b(cfg);
  auto sa = train::TrainState::fresh(cfg.seed);
  auto sb = train::TrainState::fresh(cfg.seed);
  auto la = train::train(a, bench.samples, bench.prefs, sa);
  auto lb = train::train(b, bench.samples, bench.prefs, sb);

  CHECK(la.loss_csv == lb.loss_csv);
  CHECK(la.diag_csv == lb.diag_csv);
  CHECK(la.final_total == lb.final_total);
  REQUIRE(a.params().entries().size() == b.params().entries().size());
  for (std::size_t i = 0; i < a.params().entries().size(); ++i)
    CHECK(bit_equal(a.params().entries()[i].tensor,
                    b.params().entries()[i].tensor));
}

TEST_CASE("training moves trainable weights but never the phys encoder") {
  Config cfg = small_config();
  cfg.lr = 0.05;
  cfg.max_steps = 5;
  Bench bench(cfg);
  pipeline::Copilot net(cfg);

  // Tensor copies share storage, so keep the snapshot in a plain buffer.
  auto before = snapshot(net.params());

  auto state = train::TrainState::fresh(cfg.seed);
  train::train(net, bench.samples, bench.prefs, state);

  bool any_moved = false;
  std::size_t off = 0;
  for (const auto& e : net.params().entries()) {
    bool same = true;
    for (std::size_t i = 0; i < e.tensor.size(); ++i)
      same &= (e.tensor.data()[i] == before[off + i]);
    if (e.name.rfind("phys.", 0) == 0) {
      CHECK(same);
    } else {
      any_moved |= !same;
    }
    off += e.tensor.size();
  }
  CHECK(any_moved);
}

TEST_CASE("checkpoint round trip restores every bit and resumes exactly") {
  Config cfg = small_config();
  cfg.lr = 0.01;
  cfg.epochs = 1;
  Bench bench(cfg);

  // Interrupted run: one epoch, checkpoint, reload, continue to epoch 2.
  pipeline::Copilot net(cfg);
  auto state = train::TrainState::fresh(cfg.seed);
  train::train(net, bench.samples, bench.prefs, state);

  const auto path = temp_file("cabin_test_ckpt.bin");
  train::save_checkpoint(path.string(), net, state);
  auto loaded = train::load_checkpoint(path.string());
  std::filesystem::remove(path);

  CHECK(loaded.state.step == state.step);
  CHECK(loaded.state.epoch == state.epoch);
  REQUIRE(loaded.net->params().entries().size() ==
          net.params().entries().size());
  for (std::size_t i = 0; i < net.params().entries().size(); ++i) {
    CHECK(loaded.net->params().entries()[i].name ==
          net.params().entries()[i].name);
    CHECK(bit_equal(loaded.net->params().entries()[i].tensor,
                    net.params().entries()[i].tensor));
  }

  Config two = cfg;
  two.epochs = 2;
  pipeline::Copilot resumed(two);
  for (std::size_t i = 0; i < resumed.params().entries().size(); ++i) {
    auto& dst = resumed.params().entries()[i].tensor;
    const auto& src = loaded.net->params().entries()[i].tensor;
    std::copy(src.data(), src.data() + src.size(), dst.data());
  }
  auto resumed_state = loaded.state;
  auto resumed_log = train::train(resumed, bench.samples, bench.prefs,
                                  resumed_state);

  // Uninterrupted run over both epochs.
  pipeline::Copilot straight(two);
  auto straight_state = train::TrainState::fresh(cfg.seed);
  auto straight_log = train::train(straight, bench.samples, bench.prefs,
                                   straight_state);

  CHECK(resumed_state.step == straight_state.step);
  CHECK(resumed_log.final_total == straight_log.final_total);
  for (std::size_t i = 0; i < straight.params().entries().size(); ++i)
    CHECK(bit_equal(resumed.params().entries()[i].tensor,
                    straight.params().entries()[i].tensor));

  // The resumed loss log is the tail of the uninterrupted one.
  const std::string tail =
      resumed_log.loss_csv.substr(resumed_log.loss_csv.find('\n') + 1);
  REQUIRE(straight_log.loss_csv.size() >= tail.size());
  CHECK(straight_log.loss_csv.substr(straight_log.loss_csv.size() -
                                     tail.size()) == tail);
}

TEST_CASE("corrupted checkpoints are rejected") {
  Config cfg = small_config();
  Bench bench(cfg);
  pipeline::Copilot net(cfg);
  auto state = train::TrainState::fresh(cfg.seed);

  const auto path = temp_file("cabin_test_ckpt_corrupt.bin");
  train::save_checkpoint(path.string(), net, state);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    const char flip = '\x7f';
    f.write(&flip, 1);
  }
  CHECK_THROWS_AS(train::load_checkpoint(path.string()), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("non-finite loss raises a numeric error naming the step") {
  Config cfg = small_config();
  cfg.max_steps = 2;
  Bench bench(cfg);
  pipeline::Copilot net(cfg);
  // The final layer norm gain touches every sequence, so the poison is
  // guaranteed to reach the loss.
  Tensor& w = net.params().get("final.ln.gain");
  w.data()[0] = std::nan("");

  auto state = train::TrainState::fresh(cfg.seed);
  bool threw = false;
  try {
    train::train(net, bench.samples, bench.prefs, state);
  } catch (const NumericError& e) {
    threw = true;
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("train demands a preference document for every user") {
  Config cfg = small_config();
  cfg.max_steps = 1;
  Bench bench(cfg);
  bench.prefs.clear();
  pipeline::Copilot net(cfg);
  auto state = train::TrainState::fresh(cfg.seed);
  CHECK_THROWS_AS(train::train(net, bench.samples, bench.prefs, state),
                  DataError);
}
