#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cabin/dataset_io.hpp"
#include "cabin/pipeline.hpp"

namespace cabin::metrics {

// Corpus-level BLEU-4: geometric mean of modified n-gram precisions with
// add-one smoothing on orders 2..4 (desk-scale sentences make unsmoothed
// BLEU-4 degenerate) and brevity penalty exp(1 - r/c) when c < r. One
// reference per hypothesis. SizeError on an empty corpus or length mismatch.
double bleu(const std::vector<std::vector<std::string>>& hypotheses,
            const std::vector<std::vector<std::string>>& references);

// Label of the BLEU convention above, echoed into every report so scores
// stay comparable across implementations.
extern const char* const kBleuVariant;

// F1 over (attribute, value) proposition multisets extracted through the
// template-grammar inverse. Unparseable hypothesis spans contribute nothing;
// a reference with no propositions throws DataError (references are
// generated, so that is a dataset bug).
double spice_lite(const std::string& hypothesis, const std::string& reference);

// Fraction of gold slot values whose token sequence appears contiguously in
// the prediction (token-boundary match). SizeError on an empty slot list.
double slot_accuracy(
    const std::string& prediction,
    const std::vector<std::pair<std::string, std::string>>& slots);

struct TaskMetrics {
  double bleu = 0.0;
  double spice_lite = 0.0;
  double slot_accuracy = 0.0;
  std::size_t count = 0;
};

struct MetricsReport {
  std::map<std::string, TaskMetrics> per_task;  // keyed by task name
  TaskMetrics overall;
  std::size_t pairs = 0;
  std::string mode;
  std::uint64_t seed = 0;
  std::size_t dropped_doc_tokens = 0;
  std::string config_echo;
};

// Produces the hypothesis text for one sample. Injectable so oracle
// generators (gold echo, empty string) can exercise the aggregation.
using Generator = std::function<std::string(const data::Sample&)>;

// Scores a generator over a split: per-task corpus BLEU, mean spice_lite,
// mean slot_accuracy, plus the same three over all pairs. Generation runs
// on n_threads workers (0 picks a hardware count); aggregation is
// single-threaded in sample order, so results do not depend on scheduling.
MetricsReport evaluate_with(const Generator& gen,
                            const std::vector<data::Sample>& split,
                            const Config& cfg, std::size_t n_threads = 0);

// Greedy generation through the network. Every sample's user must have a
// document in prefs (DataError naming the user otherwise). Longtext
// truncation is totaled into dropped_doc_tokens.
MetricsReport evaluate(pipeline::Copilot& net,
                       const std::vector<data::Sample>& split,
                       const std::map<std::string, std::string>& prefs,
                       std::size_t n_threads = 0);

// One human-readable document / one flat CSV (task, metric, value).
std::string report_text(const MetricsReport& report);
std::string report_csv(const MetricsReport& report);

}  // namespace cabin::metrics
