#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cabin/pipeline.hpp"
#include "cabin/random.hpp"

namespace cabin::train {

// Mutable progress carried across train calls and checkpoints. The rng
// drives the per-epoch shuffle, so restoring it resumes the exact data
// order.
struct TrainState {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  Rng rng{0};

  static TrainState fresh(std::uint64_t seed) {
    TrainState s;
    s.rng = Rng(Rng::mix(seed, 4242));
    return s;
  }
};

struct TrainLog {
  std::string loss_csv;  // step,epoch,lvi,lce,total (lce carries its weight)
  std::string diag_csv;  // step,lambda,cot_length,mean_abs_pearson,mean_range,mean_abs_value
  double final_lvi = 0;
  double final_total = 0;
  std::uint64_t steps_run = 0;
};

// One decoupled weight-decay step over every trainable parameter:
// p = p * (1 - lr * decay) - lr * grad.
void sgd_step(num::ParamStore& params, double lr, double weight_decay);

// Runs epochs state.epoch .. cfg.epochs-1 (stopping early at cfg.max_steps
// when set), updating state in place. Every sample's user must have a
// document in prefs. NumericError with the step index and record id when a
// loss goes non-finite.
TrainLog train(pipeline::Copilot& net,
               const std::vector<data::Sample>& samples,
               const std::map<std::string, std::string>& prefs,
               TrainState& state);

// Versioned binary container: config echo, progress counters, rng state, and
// every parameter (name, shape, trainable flag, f64 little-endian values),
// ending in an FNV-1a checksum of the preceding bytes.
void save_checkpoint(const std::string& path, pipeline::Copilot& net,
                     const TrainState& state);

struct LoadedCheckpoint {
  std::unique_ptr<pipeline::Copilot> net;
  TrainState state;
};

// Rebuilds the network from the embedded config echo and restores every
// parameter bit for bit. DataError on checksum or layout mismatch.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace cabin::train
