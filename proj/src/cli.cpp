#include "cabin/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cabin/chain.hpp"
#include "cabin/io.hpp"
#include "cabin/metrics.hpp"
#include "cabin/train.hpp"

namespace cabin::cli {
namespace {

namespace fs = std::filesystem;

std::string one_line(const std::string& msg) {
  std::string out;
  for (char c : msg) {
    if (c == '\n') {
      if (!out.empty() && out.back() != ' ') out += "; ";
    } else {
      out.push_back(c);
    }
  }
  return out;
}

int fail(const char* cls, const std::string& msg, int code) {
  std::cerr << "error[" << cls << "]: " << one_line(msg) << "\n";
  return code;
}

// Config file precedence: --config flag, then the CABIN_CONFIG environment
// variable, then built-in defaults. Overrides are applied afterwards and all
// problems are reported in one ConfigError.
Config base_config(const std::string& config_flag,
                   const std::vector<std::string>& overrides) {
  std::string path = config_flag;
  if (path.empty()) {
    const char* env = std::getenv("CABIN_CONFIG");
    if (env && *env) path = env;
  }
  Config cfg = path.empty() ? Config::defaults() : Config::from_file(path);
  cfg.finalize(overrides);
  return cfg;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Rebuilds the network under a different retrieval mode, carrying every
// weight over by name. Parameter shapes are mode-independent; only the
// fuser stride chain is re-solved.
std::unique_ptr<pipeline::Copilot> with_mode(
    std::unique_ptr<pipeline::Copilot> net, const std::string& mode) {
  if (mode.empty() || mode == net->config().mode) return net;
  Config cfg = net->config();
  cfg.mode = mode;
  std::vector<std::string> problems;
  cfg.validate(problems);
  if (!problems.empty()) {
    std::string msg = "mode " + mode + " rejected by checkpoint config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ConfigError(msg);
  }
  auto swapped = std::make_unique<pipeline::Copilot>(cfg);
  for (const auto& e : net->params().entries()) {
    num::Tensor& dst = swapped->params().get(e.name);
    std::copy(e.tensor.data(), e.tensor.data() + e.tensor.size(), dst.data());
  }
  return swapped;
}

struct DiagMeans {
  double pearson = 0, range = 0, abs_value = 0;
  std::size_t count = 0;
};

// Chain diagnostics averaged over the unique records of a split (the chain
// block depends on the record and document, not on the question).
DiagMeans cot_diag_means(pipeline::Copilot& net,
                         const std::vector<data::Sample>& samples,
                         const std::map<std::string, std::string>& prefs) {
  num::TapeScope no_tape(nullptr);
  DiagMeans m;
  std::uint64_t last_id = 0;
  bool first = true;
  for (const auto& s : samples) {
    if (!first && s.record->id == last_id) continue;
    first = false;
    last_id = s.record->id;
    auto it = prefs.find(s.user_id);
    if (it == prefs.end())
      throw DataError("missing preference document for user " + s.user_id);
    auto built = net.build(s, it->second, /*for_generation=*/true);
    auto d = chain::diagnostics(built.cot);
    m.pearson += d.mean_abs_pearson;
    m.range += d.mean_range;
    m.abs_value += d.mean_abs_value;
    ++m.count;
  }
  if (m.count) {
    m.pearson /= m.count;
    m.range /= m.count;
    m.abs_value /= m.count;
  }
  return m;
}

int cmd_gen_data(const std::string& out, std::size_t records,
                 const std::string& config_path,
                 const std::vector<std::string>& overrides, bool force) {
  if (records == 0) throw UsageError("--records must be at least 1");
  Config cfg = base_config(config_path, overrides);
  fs::path dir(out);
  std::error_code ec;
  if (fs::exists(dir, ec) && fs::is_directory(dir, ec) &&
      !fs::is_empty(dir, ec) && !force)
    throw IoError("output directory " + out +
                  " is not empty; pass --force to overwrite");
  auto summary = data::write_dataset(cfg, out, records, cfg.seed);
  std::cout << "dataset written to " << out << "\n";
  std::cout << "records: " << summary.records << "\n";
  std::cout << "users: " << summary.users << "\n";
  for (const auto& [split, lines] : summary.lines_per_split)
    std::cout << "split " << split << ": " << lines << " lines, manifest fnv "
              << summary.manifest_fnv.at(split) << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& prefs_dir,
              const std::string& config_path,
              const std::vector<std::string>& overrides,
              const std::string& out_ckpt, std::string loss_path,
              std::string diag_path) {
  Config cfg = base_config(config_path, overrides);
  pipeline::Copilot net(cfg);
  auto samples = data::read_split(data_dir, "train");
  auto prefs = data::read_prefs(prefs_dir);
  auto state = train::TrainState::fresh(cfg.seed);
  auto log = train::train(net, samples, prefs, state);
  if (loss_path.empty()) loss_path = out_ckpt + ".loss.csv";
  if (diag_path.empty()) diag_path = out_ckpt + ".diag.csv";
  io::write_file(loss_path, log.loss_csv);
  io::write_file(diag_path, log.diag_csv);
  train::save_checkpoint(out_ckpt, net, state);
  std::cout << "steps: " << log.steps_run << "\n";
  std::cout << "final lvi: " << io::fmt_double(log.final_lvi) << "\n";
  std::cout << "final total: " << io::fmt_double(log.final_total) << "\n";
  std::cout << "checkpoint: " << out_ckpt << "\n";
  std::cout << "loss csv: " << loss_path << "\n";
  std::cout << "diag csv: " << diag_path << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir,
             std::string prefs_dir, const std::string& mode,
             const std::string& split, const std::string& out_report,
             const std::string& out_csv, std::size_t threads) {
  auto loaded = train::load_checkpoint(ckpt);
  auto net = with_mode(std::move(loaded.net), mode);
  auto samples = data::read_split(data_dir, split);
  if (prefs_dir.empty()) prefs_dir = (fs::path(data_dir) / "prefs").string();
  auto prefs = data::read_prefs(prefs_dir);
  auto report = metrics::evaluate(*net, samples, prefs, threads);
  if (report.dropped_doc_tokens > 0)
    std::cerr << "warning: context window overflow: "
              << report.dropped_doc_tokens
              << " document tokens truncated across the split\n";
  std::cout << metrics::report_text(report);
  if (!out_report.empty())
    io::write_file(out_report, metrics::report_text(report));
  if (!out_csv.empty()) io::write_file(out_csv, metrics::report_csv(report));
  return 0;
}

int cmd_sweep(const std::string& param, const std::string& values_csv,
              const std::string& seeds_csv, const std::string& data_dir,
              std::string prefs_dir, const std::string& config_path,
              const std::vector<std::string>& overrides,
              const std::string& out_path, std::size_t threads) {
  auto value_strs = split_list(values_csv);
  auto seed_strs = split_list(seeds_csv);
  if (value_strs.empty()) throw UsageError("--values is empty");
  if (seed_strs.empty()) throw UsageError("--seeds is empty");
  Config base = base_config(config_path, overrides);

  // Every (param, value) combination is validated, including stride
  // arithmetic, before any training starts.
  std::vector<std::string> problems;
  for (const auto& v : value_strs) {
    Config probe = base;
    std::vector<std::string> p;
    probe.apply(param, v, p);
    if (p.empty()) probe.validate(p);
    for (const auto& msg : p) problems.push_back(param + "=" + v + ": " + msg);
  }
  if (!problems.empty()) {
    std::string msg = "sweep rejected:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ConfigError(msg);
  }
  std::vector<std::uint64_t> seeds;
  for (const auto& s : seed_strs) {
    try {
      seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw UsageError("bad seed value: " + s);
    }
  }

  auto train_split = data::read_split(data_dir, "train");
  auto val_split = data::read_split(data_dir, "val");
  if (prefs_dir.empty()) prefs_dir = (fs::path(data_dir) / "prefs").string();
  auto prefs = data::read_prefs(prefs_dir);

  std::ostringstream csv;
  csv << "param,value,seed,bleu,spice_lite,slot_accuracy,final_lvi,"
         "final_total,mean_abs_pearson,mean_range,mean_abs_value\n";
  for (const auto& v : value_strs) {
    for (std::uint64_t seed : seeds) {
      Config cfg = base;
      std::vector<std::string> p;
      cfg.apply(param, v, p);
      cfg.apply("seed", std::to_string(seed), p);
      if (!p.empty()) throw InternalError("sweep revalidation: " + p.front());
      pipeline::Copilot net(cfg);
      auto state = train::TrainState::fresh(cfg.seed);
      auto log = train::train(net, train_split, prefs, state);
      auto report = metrics::evaluate(net, val_split, prefs, threads);
      auto diag = cot_diag_means(net, val_split, prefs);
      csv << param << "," << v << "," << seed << ","
          << io::fmt_double(report.overall.bleu) << ","
          << io::fmt_double(report.overall.spice_lite) << ","
          << io::fmt_double(report.overall.slot_accuracy) << ","
          << io::fmt_double(log.final_lvi) << ","
          << io::fmt_double(log.final_total) << ","
          << io::fmt_double(diag.pearson) << ","
          << io::fmt_double(diag.range) << ","
          << io::fmt_double(diag.abs_value) << "\n";
      std::cerr << "sweep " << param << "=" << v << " seed=" << seed
                << " done\n";
    }
  }
  std::cout << csv.str();
  if (!out_path.empty()) io::write_file(out_path, csv.str());
  return 0;
}

int cmd_diagnose(const std::string& ckpt, const std::string& data_dir,
                 std::string prefs_dir, const std::string& split,
                 const std::string& out_path) {
  auto loaded = train::load_checkpoint(ckpt);
  auto& net = *loaded.net;
  auto samples = data::read_split(data_dir, split);
  if (prefs_dir.empty()) prefs_dir = (fs::path(data_dir) / "prefs").string();
  auto prefs = data::read_prefs(prefs_dir);

  auto cot = cot_diag_means(net, samples, prefs);

  // Baseline: the same statistics over ordinary question-token embeddings,
  // the reference point the chain block is compared against.
  num::TapeScope no_tape(nullptr);
  DiagMeans q;
  const num::Tensor& table = net.params().get("vocab.embed");
  for (const auto& s : samples) {
    auto ids = data::Vocab::shared().encode(s.qa.question);
    auto d = chain::diagnostics(num::embed_rows(table, ids));
    q.pearson += d.mean_abs_pearson;
    q.range += d.mean_range;
    q.abs_value += d.mean_abs_value;
    ++q.count;
  }
  if (q.count) {
    q.pearson /= q.count;
    q.range /= q.count;
    q.abs_value /= q.count;
  }

  std::ostringstream csv;
  csv << "source,count,mean_abs_pearson,mean_range,mean_abs_value\n";
  csv << "cot," << cot.count << "," << io::fmt_double(cot.pearson) << ","
      << io::fmt_double(cot.range) << "," << io::fmt_double(cot.abs_value)
      << "\n";
  csv << "question_embed," << q.count << "," << io::fmt_double(q.pearson)
      << "," << io::fmt_double(q.range) << "," << io::fmt_double(q.abs_value)
      << "\n";
  std::cout << csv.str();
  if (!out_path.empty()) io::write_file(out_path, csv.str());
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"cabin: a desk-scale driving-copilot workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_out;
  std::size_t gen_records = 0, gen_users = 0;
  std::uint64_t gen_seed = 0;
  bool gen_force = false;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--records", gen_records, "number of scene records")
      ->required();
  gen->add_option("--users", gen_users, "number of preference profiles");
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--config", config_path, "config file path");
  gen->add_option("--set", sets, "key=value override");
  gen->add_flag("--force", gen_force, "overwrite a non-empty directory");

  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_data, tr_prefs, tr_ckpt, tr_loss, tr_diag;
  double tr_lambda = 0;
  std::uint64_t tr_seed = 0;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--prefs", tr_prefs, "preference docs directory")->required();
  tr->add_option("--out-ckpt", tr_ckpt, "checkpoint output path")->required();
  tr->add_option("--config", config_path, "config file path");
  tr->add_option("--set", sets, "key=value override");
  tr->add_option("--lambda-lce", tr_lambda, "eliciting loss weight");
  tr->add_option("--seed", tr_seed, "master seed");
  tr->add_option("--out-loss-csv", tr_loss, "loss curve path");
  tr->add_option("--out-diag-csv", tr_diag, "diagnostics curve path");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_prefs, ev_mode, ev_split = "val";
  std::string ev_report, ev_csv;
  std::size_t ev_threads = 0;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--prefs", ev_prefs,
                 "preference docs directory (default <data>/prefs)");
  ev->add_option("--mode", ev_mode, "retrieval mode")
      ->check(CLI::IsMember({"rag", "longtext"}));
  ev->add_option("--split", ev_split, "dataset split");
  ev->add_option("--out-report", ev_report, "report text path");
  ev->add_option("--out-csv", ev_csv, "report csv path");
  ev->add_option("--threads", ev_threads, "generation workers (0 = auto)");

  auto* sw = app.add_subcommand("sweep", "train across a parameter grid");
  std::string sw_param, sw_values, sw_seeds, sw_data, sw_prefs, sw_out;
  std::size_t sw_threads = 0;
  sw->add_option("--param", sw_param, "swept parameter")
      ->required()
      ->check(CLI::IsMember({"lambda_lce", "cot_length"}));
  sw->add_option("--values", sw_values, "comma list of values")->required();
  sw->add_option("--seeds", sw_seeds, "comma list of seeds")->required();
  sw->add_option("--data", sw_data, "dataset directory")->required();
  sw->add_option("--prefs", sw_prefs,
                 "preference docs directory (default <data>/prefs)");
  sw->add_option("--config", config_path, "config file path");
  sw->add_option("--set", sets, "key=value override");
  sw->add_option("--out", sw_out, "csv output path");
  sw->add_option("--threads", sw_threads, "generation workers (0 = auto)");

  auto* dg = app.add_subcommand("diagnose", "chain diagnostics vs baseline");
  std::string dg_ckpt, dg_data, dg_prefs, dg_split = "val", dg_out;
  dg->add_option("--ckpt", dg_ckpt, "checkpoint path")->required();
  dg->add_option("--data", dg_data, "dataset directory")->required();
  dg->add_option("--prefs", dg_prefs,
                 "preference docs directory (default <data>/prefs)");
  dg->add_option("--split", dg_split, "dataset split");
  dg->add_option("--out", dg_out, "csv output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("usage", e.what(), 2);
  }

  try {
    if (gen->parsed()) {
      std::vector<std::string> overrides = sets;
      if (gen->count("--users"))
        overrides.push_back("users=" + std::to_string(gen_users));
      if (gen->count("--seed"))
        overrides.push_back("seed=" + std::to_string(gen_seed));
      return cmd_gen_data(gen_out, gen_records, config_path, overrides,
                          gen_force);
    }
    if (tr->parsed()) {
      std::vector<std::string> overrides = sets;
      if (tr->count("--lambda-lce"))
        overrides.push_back("lambda_lce=" + io::fmt_double(tr_lambda));
      if (tr->count("--seed"))
        overrides.push_back("seed=" + std::to_string(tr_seed));
      return cmd_train(tr_data, tr_prefs, config_path, overrides, tr_ckpt,
                       tr_loss, tr_diag);
    }
    if (ev->parsed())
      return cmd_eval(ev_ckpt, ev_data, ev_prefs, ev_mode, ev_split,
                      ev_report, ev_csv, ev_threads);
    if (sw->parsed())
      return cmd_sweep(sw_param, sw_values, sw_seeds, sw_data, sw_prefs,
                       config_path, sets, sw_out, sw_threads);
    if (dg->parsed())
      return cmd_diagnose(dg_ckpt, dg_data, dg_prefs, dg_split, dg_out);
    throw InternalError("no subcommand dispatched");
  } catch (const UsageError& e) {
    return fail("usage", e.what(), 2);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 3);
  } catch (const IoError& e) {
    return fail("io", e.what(), 4);
  } catch (const DataError& e) {
    return fail("data", e.what(), 5);
  } catch (const NumericError& e) {
    return fail("numeric", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
}

}  // namespace cabin::cli
