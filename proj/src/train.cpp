#include "cabin/train.hpp"

#include <cmath>

#include "cabin/io.hpp"

namespace cabin::train {

using namespace cabin::num;

void sgd_step(ParamStore& params, double lr, double weight_decay) {
  for (auto& entry : params.entries()) {
    if (!entry.trainable) continue;
    Tensor& t = entry.tensor;
    const double keep = 1.0 - lr * weight_decay;
    double* v = t.data();
    const double* g = t.grad_data();
    if (!g) continue;  // never touched by the tape this step
    for (std::size_t i = 0; i < t.size(); ++i) v[i] = v[i] * keep - lr * g[i];
  }
}

namespace {

const std::string& doc_for(const std::map<std::string, std::string>& prefs,
                           const std::string& user_id) {
  auto it = prefs.find(user_id);
  if (it == prefs.end())
    throw DataError("missing preference document for user " + user_id);
  return it->second;
}

}  // namespace

TrainLog train(pipeline::Copilot& net,
               const std::vector<data::Sample>& samples,
               const std::map<std::string, std::string>& prefs,
               TrainState& state) {
  if (samples.empty()) throw DataError("training split is empty");
  const Config& cfg = net.config();
  TrainLog log;
  log.loss_csv = "step,epoch,lvi,lce,total\n";
  log.diag_csv =
      "step,lambda,cot_length,mean_abs_pearson,mean_range,mean_abs_value\n";

  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
  bool done = false;
  for (; state.epoch < cfg.epochs && !done; ++state.epoch) {
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    state.rng.shuffle(order);

    for (std::size_t at = 0; at < order.size() && !done; at += batch) {
      const std::size_t n = std::min(batch, order.size() - at);
      Tape tape;
      TapeScope scope(&tape);
      net.params().zero_grads();

      Tensor batch_total;
      double lvi_sum = 0, lce_sum = 0;
      chain::CotDiagnostics diag;
      for (std::size_t b = 0; b < n; ++b) {
        const data::Sample& sample = samples[order[at + b]];
        auto built = net.build(sample, doc_for(prefs, sample.user_id), false);
        auto parts = model::total_loss(built.seq, built.cot, net.params(), cfg,
                                       cfg.lambda_lce);
        if (!std::isfinite(parts.total.item()))
          throw NumericError(
              "non-finite loss at step " + std::to_string(state.step) +
              " (record " + std::to_string(sample.record->id) + ")");
        lvi_sum += parts.lvi.item();
        lce_sum += cfg.lambda_lce * parts.lce_raw.item();
        if (b == 0) diag = chain::diagnostics(built.cot);
        batch_total = b == 0 ? parts.total : add(batch_total, parts.total);
      }
      Tensor step_loss = scale(batch_total, 1.0 / static_cast<double>(n));
      tape.backward(step_loss);
      sgd_step(net.params(), cfg.lr, cfg.weight_decay);

      log.final_lvi = lvi_sum / n;
      log.final_total = step_loss.item();
      log.loss_csv += std::to_string(state.step) + "," +
                      std::to_string(state.epoch) + "," +
                      io::fmt_double(lvi_sum / n) + "," +
                      io::fmt_double(lce_sum / n) + "," +
                      io::fmt_double(step_loss.item()) + "\n";
      if (cfg.diag_interval > 0 && state.step % cfg.diag_interval == 0) {
        log.diag_csv += std::to_string(state.step) + "," +
                        io::fmt_double(cfg.lambda_lce) + "," +
                        std::to_string(cfg.cot_length) + "," +
                        io::fmt_double(diag.mean_abs_pearson) + "," +
                        io::fmt_double(diag.mean_range) + "," +
                        io::fmt_double(diag.mean_abs_value) + "\n";
      }
      ++state.step;
      ++log.steps_run;
      if (cfg.max_steps > 0 && state.step >= cfg.max_steps) done = true;
    }
  }
  return log;
}

namespace {

constexpr std::uint32_t kCkptMagic = 0x54504b43;  // "CKPT" little-endian
constexpr std::uint32_t kCkptVersion = 1;

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  io::put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

}  // namespace

void save_checkpoint(const std::string& path, pipeline::Copilot& net,
                     const TrainState& state) {
  std::vector<std::uint8_t> out;
  io::put_u32(out, kCkptMagic);
  io::put_u32(out, kCkptVersion);
  put_string(out, net.config().serialize());
  io::put_u64(out, state.step);
  io::put_u64(out, state.epoch);
  put_string(out, state.rng.serialize());
  io::put_u32(out, static_cast<std::uint32_t>(net.params().entries().size()));
  for (const auto& entry : net.params().entries()) {
    put_string(out, entry.name);
    io::put_u32(out, static_cast<std::uint32_t>(entry.tensor.rows()));
    io::put_u32(out, static_cast<std::uint32_t>(entry.tensor.cols()));
    out.push_back(entry.trainable ? 1 : 0);
    for (std::size_t i = 0; i < entry.tensor.size(); ++i)
      io::put_f64(out, entry.tensor.data()[i]);
  }
  io::put_u64(out, io::fnv1a(out.data(), out.size()));
  io::write_binary(path, out);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  auto bytes = io::read_binary(path);
  if (bytes.size() < 16) throw DataError("checkpoint too short: " + path);
  {
    io::Reader tail{bytes, bytes.size() - 8};
    if (tail.u64() != io::fnv1a(bytes.data(), bytes.size() - 8))
      throw DataError("checkpoint checksum mismatch: " + path);
  }
  io::Reader r{bytes};
  if (r.u32() != kCkptMagic) throw DataError("not a checkpoint: " + path);
  const std::uint32_t version = r.u32();
  if (version != kCkptVersion)
    throw DataError("unsupported checkpoint version " +
                    std::to_string(version));
  const std::string echo = r.str(r.u32());

  LoadedCheckpoint out;
  out.net = std::make_unique<pipeline::Copilot>(Config::from_string(echo));
  out.state.step = r.u64();
  out.state.epoch = r.u64();
  out.state.rng = Rng::deserialize(r.str(r.u32()));

  const std::uint32_t count = r.u32();
  auto& entries = out.net->params().entries();
  if (count != entries.size())
    throw DataError("checkpoint holds " + std::to_string(count) +
                    " parameters, network has " +
                    std::to_string(entries.size()));
  for (auto& entry : entries) {
    const std::string name = r.str(r.u32());
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    const bool trainable = r.u8() != 0;
    if (name != entry.name || rows != entry.tensor.rows() ||
        cols != entry.tensor.cols() || trainable != entry.trainable)
      throw DataError("checkpoint parameter " + name +
                      " does not match the registered " + entry.name);
    for (std::size_t i = 0; i < entry.tensor.size(); ++i)
      entry.tensor.data()[i] = r.f64();
  }
  return out;
}

}  // namespace cabin::train
