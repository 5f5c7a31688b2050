#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cabin {

// Flat key=value run configuration. Every tunable default in the pipeline
// lives here; unknown keys are rejected and all problems are reported in one
// pass. The serialized form is echoed into every artifact (datasets,
// checkpoints, CSVs, reports) for provenance.
struct Config {
  // reproducibility
  std::uint64_t seed = 0;

  // language model
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t max_seq_len = 256;

  // stream encoders
  std::string streams = "front,out,face,hand,nir,depth,phys";
  std::size_t visual_tokens_per_stream = 4;  // L
  std::size_t feature_dim = 32;              // D
  std::size_t patch_size = 4;
  std::size_t frames_per_clip = 4;
  std::size_t frame_size = 16;
  double phys_duration = 8.0;      // seconds
  double phys_sample_rate = 30.0;  // Hz
  double phys_noise_std = 0.05;

  // retrieval
  std::size_t max_sentence_len = 64;  // M
  std::size_t rag_tokens = 4;         // K
  double rag_temperature = 0.5;
  std::size_t rag_kernel = 2;
  std::string rag_strides = "2,2,2,2";  // or "auto"

  // latent chain
  std::size_t cot_length = 8;
  double lambda_lce = 0.1;
  bool cot_bounded = true;
  std::size_t fuser_kernel = 2;
  std::string fuser_strides = "auto";  // or explicit "s1,s2"

  // training
  double lr = 0.001;
  double weight_decay = 0.02;
  std::size_t epochs = 2;
  std::size_t batch_size = 2;
  std::size_t max_steps = 0;  // 0 = no cap
  std::string mode = "rag";   // rag | longtext
  std::size_t max_new_tokens = 24;
  std::size_t diag_interval = 50;
  double init_scale = 0.05;
  double fuser_init_scale = 0.02;

  // synthetic data
  std::size_t users = 4;
  std::size_t quirk_sentences = 3;
  bool needle_prefs = false;

  // Parses "key = value" lines; '#' starts a comment. Collects every problem
  // and throws one ConfigError listing all of them.
  static Config from_file(const std::string& path);
  static Config defaults() { return Config{}; }

  // Applies one "key=value" override (the --set form). Errors accumulate in
  // problems instead of throwing, so callers can report everything at once.
  void apply(const std::string& key, const std::string& value,
             std::vector<std::string>& problems);

  // Cross-field validation including stride arithmetic for both conv chains.
  // Appends to problems.
  void validate(std::vector<std::string>& problems) const;

  // apply() for a batch + validate(), throwing ConfigError on any problem.
  void finalize(const std::vector<std::string>& overrides);

  // Canonical echo: every key in fixed order, one per line.
  std::string serialize() const;

  // Parses a serialized echo back (used when loading checkpoints).
  static Config from_string(const std::string& text);

  // Derived quantities.
  std::size_t n_streams() const;
  std::vector<std::string> stream_names() const;
  // Fuser input length: all segment rows plus the rag block when mode=rag.
  std::size_t fuser_input_len() const;
};

// Picks per-layer strides so a conv chain maps input_len to output_len with
// the given kernel width, honoring T' = (T - kw)/stride + 1 at every layer.
// Deterministic: depth-first, smallest stride first, first solution wins.
// Empty result = no solution.
std::vector<std::size_t> solve_strides(std::size_t input_len,
                                       std::size_t output_len,
                                       std::size_t n_layers, std::size_t kw);

// Resolves a strides config string: either "auto" (run the solver) or an
// explicit comma list (verified to land exactly on output_len). Throws
// ConfigError naming the chain on failure.
std::vector<std::size_t> resolve_strides(const std::string& setting,
                                         std::size_t input_len,
                                         std::size_t output_len,
                                         std::size_t n_layers, std::size_t kw,
                                         const std::string& chain_name);

}  // namespace cabin
