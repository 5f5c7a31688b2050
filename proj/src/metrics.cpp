#include "cabin/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "cabin/io.hpp"
#include "cabin/model.hpp"
#include "cabin/vocab.hpp"

namespace cabin::metrics {

const char* const kBleuVariant =
    "corpus BLEU-4, add-one smoothing on n-gram orders 2..4, brevity penalty";

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& toks,
                                          std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  if (toks.size() >= n)
    for (std::size_t i = 0; i + n <= toks.size(); ++i)
      ++counts[Ngram(toks.begin() + i, toks.begin() + i + n)];
  return counts;
}

}  // namespace

double bleu(const std::vector<std::vector<std::string>>& hypotheses,
            const std::vector<std::vector<std::string>>& references) {
  if (hypotheses.empty()) throw SizeError("bleu: empty corpus");
  if (hypotheses.size() != references.size())
    throw SizeError("bleu: " + std::to_string(hypotheses.size()) +
                    " hypotheses vs " + std::to_string(references.size()) +
                    " references");
  std::size_t hyp_len = 0, ref_len = 0;
  std::size_t matched[5] = {0, 0, 0, 0, 0};
  std::size_t total[5] = {0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += hypotheses[i].size();
    ref_len += references[i].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      auto ref = ngram_counts(references[i], n);
      for (const auto& [gram, c] : ngram_counts(hypotheses[i], n)) {
        total[n] += c;
        auto it = ref.find(gram);
        if (it != ref.end()) matched[n] += std::min(c, it->second);
      }
    }
  }
  // No unigram overlap (or no hypothesis tokens at all) pins the geometric
  // mean to zero; orders 2..4 are smoothed so only order 1 can do that.
  if (total[1] == 0 || matched[1] == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    double p = n == 1 ? static_cast<double>(matched[1]) / total[1]
                      : static_cast<double>(matched[n] + 1) / (total[n] + 1);
    log_sum += std::log(p) / 4.0;
  }
  double bp = hyp_len < ref_len
                  ? std::exp(1.0 - static_cast<double>(ref_len) / hyp_len)
                  : 1.0;
  return bp * std::exp(log_sum);
}

double spice_lite(const std::string& hypothesis,
                  const std::string& reference) {
  auto ref_props = data::parse_propositions(reference);
  if (ref_props.empty())
    throw DataError("spice_lite: reference has no propositions: \"" +
                    reference + "\"");
  auto hyp_props = data::parse_propositions(hypothesis);
  if (hyp_props.empty()) return 0.0;
  std::map<std::pair<std::string, std::string>, std::size_t> budget;
  for (const auto& p : ref_props) ++budget[p];
  std::size_t matched = 0;
  for (const auto& p : hyp_props) {
    auto it = budget.find(p);
    if (it != budget.end() && it->second > 0) {
      --it->second;
      ++matched;
    }
  }
  if (matched == 0) return 0.0;
  double precision = static_cast<double>(matched) / hyp_props.size();
  double recall = static_cast<double>(matched) / ref_props.size();
  return 2.0 * precision * recall / (precision + recall);
}

double slot_accuracy(
    const std::string& prediction,
    const std::vector<std::pair<std::string, std::string>>& slots) {
  if (slots.empty()) throw SizeError("slot_accuracy: empty slot list");
  auto pred = data::Vocab::tokenize(prediction);
  std::size_t hits = 0;
  for (const auto& [name, value] : slots) {
    auto want = data::Vocab::tokenize(value);
    if (!want.empty() &&
        std::search(pred.begin(), pred.end(), want.begin(), want.end()) !=
            pred.end())
      ++hits;
  }
  return static_cast<double>(hits) / slots.size();
}

namespace {

struct Accumulator {
  std::vector<std::vector<std::string>> hyp_tokens, ref_tokens;
  double spice_sum = 0.0, slot_sum = 0.0;
  std::size_t count = 0;

  void add(const std::string& hyp, const data::QAPair& qa) {
    hyp_tokens.push_back(data::Vocab::tokenize(hyp));
    ref_tokens.push_back(data::Vocab::tokenize(qa.answer));
    spice_sum += spice_lite(hyp, qa.answer);
    slot_sum += slot_accuracy(hyp, qa.slots);
    ++count;
  }

  TaskMetrics finish() const {
    TaskMetrics m;
    m.count = count;
    if (count) {
      m.bleu = bleu(hyp_tokens, ref_tokens);
      m.spice_lite = spice_sum / count;
      m.slot_accuracy = slot_sum / count;
    }
    return m;
  }
};

}  // namespace

MetricsReport evaluate_with(const Generator& gen,
                            const std::vector<data::Sample>& split,
                            const Config& cfg, std::size_t n_threads) {
  if (split.empty()) throw DataError("evaluate: empty split");
  std::size_t workers = n_threads ? n_threads
                                  : std::max(1u, std::min(
                                        std::thread::hardware_concurrency(),
                                        8u));
  workers = std::min(workers, split.size());

  std::vector<std::string> hyps(split.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> failures(workers);
  auto work = [&](std::size_t w) {
    try {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= split.size()) return;
        hyps[i] = gen(split[i]);
      }
    } catch (...) {
      failures[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);

  // Aggregation walks the split in order, so scores never depend on which
  // worker produced which hypothesis.
  std::map<std::string, Accumulator> by_task;
  Accumulator all;
  for (std::size_t i = 0; i < split.size(); ++i) {
    by_task[data::task_name(split[i].qa.task)].add(hyps[i], split[i].qa);
    all.add(hyps[i], split[i].qa);
  }

  MetricsReport report;
  for (const auto& [name, acc] : by_task) report.per_task[name] = acc.finish();
  report.overall = all.finish();
  report.pairs = split.size();
  report.mode = cfg.mode;
  report.seed = cfg.seed;
  report.config_echo = cfg.serialize();
  return report;
}

MetricsReport evaluate(pipeline::Copilot& net,
                       const std::vector<data::Sample>& split,
                       const std::map<std::string, std::string>& prefs,
                       std::size_t n_threads) {
  for (const auto& s : split)
    if (!prefs.count(s.user_id))
      throw DataError("missing preference document for user " + s.user_id);
  std::atomic<std::size_t> dropped{0};
  Generator gen = [&](const data::Sample& s) {
    num::TapeScope no_tape(nullptr);
    auto built = net.build(s, prefs.at(s.user_id), /*for_generation=*/true);
    dropped += built.dropped_doc_tokens;
    auto ids = model::generate(built.seq, net.params(), net.config(),
                               net.config().max_new_tokens);
    return data::Vocab::shared().decode(ids);
  };
  auto report = evaluate_with(gen, split, net.config(), n_threads);
  report.dropped_doc_tokens = dropped.load();
  return report;
}

namespace {

// Tasks in enum order; per_task is alphabetical, reports read better in the
// dataset's own order.
std::vector<std::pair<std::string, const TaskMetrics*>> ordered_rows(
    const MetricsReport& report) {
  std::vector<std::pair<std::string, const TaskMetrics*>> rows;
  for (int t = 0; t < data::kNumTasks; ++t) {
    auto it = report.per_task.find(data::task_name(static_cast<data::Task>(t)));
    if (it != report.per_task.end()) rows.emplace_back(it->first, &it->second);
  }
  return rows;
}

}  // namespace

std::string report_text(const MetricsReport& report) {
  std::ostringstream out;
  out << "evaluation report\n";
  out << "mode: " << report.mode << "\n";
  out << "seed: " << report.seed << "\n";
  out << "pairs: " << report.pairs << "\n";
  out << "bleu variant: " << kBleuVariant << "\n";
  out << "dropped doc tokens: " << report.dropped_doc_tokens << "\n\n";
  auto row = [&](const std::string& name, const TaskMetrics& m) {
    out << name;
    for (std::size_t i = name.size(); i < 18; ++i) out << ' ';
    out << m.count << " " << io::fmt_double(m.bleu) << " "
        << io::fmt_double(m.spice_lite) << " "
        << io::fmt_double(m.slot_accuracy) << "\n";
  };
  out << "task              pairs bleu spice_lite slot_accuracy\n";
  for (const auto& [name, m] : ordered_rows(report)) row(name, *m);
  row("overall", report.overall);
  out << "\nconfig:\n" << report.config_echo;
  return out.str();
}

std::string report_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "task,metric,value\n";
  auto rows = ordered_rows(report);
  rows.emplace_back("overall", &report.overall);
  for (const auto& [name, m] : rows) {
    out << name << ",bleu," << io::fmt_double(m->bleu) << "\n";
    out << name << ",spice_lite," << io::fmt_double(m->spice_lite) << "\n";
    out << name << ",slot_accuracy," << io::fmt_double(m->slot_accuracy)
        << "\n";
    out << name << ",count," << m->count << "\n";
  }
  return out.str();
}

}  // namespace cabin::metrics
