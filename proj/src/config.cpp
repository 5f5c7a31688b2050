#include "cabin/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cabin/errors.hpp"

namespace cabin {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_u64(const std::string& v, std::uint64_t& out) {
  const char* b = v.data();
  const char* e = b + v.size();
  auto r = std::from_chars(b, e, out);
  return r.ec == std::errc{} && r.ptr == e;
}

bool parse_size(const std::string& v, std::size_t& out) {
  std::uint64_t u;
  if (!parse_u64(v, u)) return false;
  out = static_cast<std::size_t>(u);
  return true;
}

bool parse_double(const std::string& v, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(v, &used);
    return used == v.size();
  } catch (...) {
    return false;
  }
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0") {
    out = false;
    return true;
  }
  return false;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace

void Config::apply(const std::string& key, const std::string& value,
                   std::vector<std::string>& problems) {
  auto bad = [&](const char* want) {
    problems.push_back(key + ": cannot parse '" + value + "' as " + want);
  };
  if (key == "seed") {
    if (!parse_u64(value, seed)) bad("unsigned integer");
  } else if (key == "d_model") {
    if (!parse_size(value, d_model)) bad("positive integer");
  } else if (key == "n_layers") {
    if (!parse_size(value, n_layers)) bad("positive integer");
  } else if (key == "n_heads") {
    if (!parse_size(value, n_heads)) bad("positive integer");
  } else if (key == "max_seq_len") {
    if (!parse_size(value, max_seq_len)) bad("positive integer");
  } else if (key == "streams") {
    streams = value;
  } else if (key == "visual_tokens_per_stream") {
    if (!parse_size(value, visual_tokens_per_stream)) bad("positive integer");
  } else if (key == "feature_dim") {
    if (!parse_size(value, feature_dim)) bad("positive integer");
  } else if (key == "patch_size") {
    if (!parse_size(value, patch_size)) bad("positive integer");
  } else if (key == "frames_per_clip") {
    if (!parse_size(value, frames_per_clip)) bad("positive integer");
  } else if (key == "frame_size") {
    if (!parse_size(value, frame_size)) bad("positive integer");
  } else if (key == "phys_duration") {
    if (!parse_double(value, phys_duration)) bad("real");
  } else if (key == "phys_sample_rate") {
    if (!parse_double(value, phys_sample_rate)) bad("real");
  } else if (key == "phys_noise_std") {
    if (!parse_double(value, phys_noise_std)) bad("real");
  } else if (key == "max_sentence_len") {
    if (!parse_size(value, max_sentence_len)) bad("positive integer");
  } else if (key == "rag_tokens") {
    if (!parse_size(value, rag_tokens)) bad("positive integer");
  } else if (key == "rag_temperature") {
    if (!parse_double(value, rag_temperature)) bad("real");
  } else if (key == "rag_kernel") {
    if (!parse_size(value, rag_kernel)) bad("positive integer");
  } else if (key == "rag_strides") {
    rag_strides = value;
  } else if (key == "cot_length") {
    if (!parse_size(value, cot_length)) bad("positive integer");
  } else if (key == "lambda_lce") {
    if (!parse_double(value, lambda_lce)) bad("real");
  } else if (key == "cot_bounded") {
    if (!parse_bool(value, cot_bounded)) bad("bool");
  } else if (key == "fuser_kernel") {
    if (!parse_size(value, fuser_kernel)) bad("positive integer");
  } else if (key == "fuser_strides") {
    fuser_strides = value;
  } else if (key == "lr") {
    if (!parse_double(value, lr)) bad("real");
  } else if (key == "weight_decay") {
    if (!parse_double(value, weight_decay)) bad("real");
  } else if (key == "epochs") {
    if (!parse_size(value, epochs)) bad("positive integer");
  } else if (key == "batch_size") {
    if (!parse_size(value, batch_size)) bad("positive integer");
  } else if (key == "max_steps") {
    if (!parse_size(value, max_steps)) bad("non-negative integer");
  } else if (key == "mode") {
    mode = value;
  } else if (key == "max_new_tokens") {
    if (!parse_size(value, max_new_tokens)) bad("non-negative integer");
  } else if (key == "diag_interval") {
    if (!parse_size(value, diag_interval)) bad("positive integer");
  } else if (key == "init_scale") {
    if (!parse_double(value, init_scale)) bad("real");
  } else if (key == "fuser_init_scale") {
    if (!parse_double(value, fuser_init_scale)) bad("real");
  } else if (key == "users") {
    if (!parse_size(value, users)) bad("positive integer");
  } else if (key == "quirk_sentences") {
    if (!parse_size(value, quirk_sentences)) bad("non-negative integer");
  } else if (key == "needle_prefs") {
    if (!parse_bool(value, needle_prefs)) bad("bool");
  } else {
    problems.push_back("unknown key: " + key);
  }
}

std::vector<std::string> Config::stream_names() const {
  return split_commas(streams);
}

std::size_t Config::n_streams() const { return stream_names().size(); }

std::size_t Config::fuser_input_len() const {
  std::size_t len = n_streams() * (visual_tokens_per_stream + 2);
  if (mode == "rag") len += rag_tokens;
  return len;
}

void Config::validate(std::vector<std::string>& problems) const {
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };
  require(d_model >= 2, "d_model must be at least 2");
  require(n_layers >= 1, "n_layers must be positive");
  require(n_heads >= 1, "n_heads must be positive");
  require(n_heads == 0 || d_model % std::max<std::size_t>(n_heads, 1) == 0,
          "d_model must be divisible by n_heads");
  require(max_seq_len >= 1, "max_seq_len must be positive");
  require(visual_tokens_per_stream >= 1,
          "visual_tokens_per_stream must be positive");
  require(feature_dim >= 1, "feature_dim must be positive");
  require(patch_size >= 1, "patch_size must be positive");
  require(frames_per_clip >= 1, "frames_per_clip must be positive");
  require(frame_size >= 1, "frame_size must be positive");
  require(patch_size == 0 || frame_size % std::max<std::size_t>(patch_size, 1) == 0,
          "frame_size must be divisible by patch_size");
  require(phys_duration > 0, "phys_duration must be positive");
  // The synthetic signal carries energy up to 3x the fundamental's second
  // harmonic band; with hr capped at 120 bpm that needs 12 Hz sampling.
  require(phys_sample_rate >= 12.0,
          "phys_sample_rate must be at least 12 Hz for hr up to 120 bpm");
  require(phys_noise_std >= 0, "phys_noise_std must be non-negative");
  require(max_sentence_len >= 1, "max_sentence_len must be positive");
  require(rag_tokens >= 1, "rag_tokens must be positive");
  require(rag_temperature > 0, "rag_temperature must be positive");
  require(rag_kernel >= 1, "rag_kernel must be positive");
  require(cot_length >= 1, "cot_length must be positive");
  require(lambda_lce >= 0, "lambda_lce must be non-negative");
  require(fuser_kernel >= 1, "fuser_kernel must be positive");
  require(lr > 0, "lr must be positive");
  require(weight_decay >= 0, "weight_decay must be non-negative");
  require(epochs >= 1, "epochs must be positive");
  require(batch_size >= 1, "batch_size must be positive");
  require(mode == "rag" || mode == "longtext",
          "mode must be rag or longtext, got '" + mode + "'");
  require(diag_interval >= 1, "diag_interval must be positive");
  require(init_scale > 0, "init_scale must be positive");
  require(fuser_init_scale > 0, "fuser_init_scale must be positive");
  require(users >= 1, "users must be positive");

  auto known = {"front", "out", "face", "hand", "nir", "depth", "phys"};
  auto names = stream_names();
  require(!names.empty(), "streams must list at least one stream");
  for (const auto& n : names) {
    bool ok = false;
    for (const char* k : known) ok = ok || n == k;
    if (!ok) problems.push_back("streams: unknown stream '" + n + "'");
  }
  for (std::size_t i = 0; i + 1 < names.size(); ++i)
    for (std::size_t j = i + 1; j < names.size(); ++j)
      if (names[i] == names[j])
        problems.push_back("streams: duplicate stream '" + names[i] + "'");

  // Stride arithmetic for both conv chains, checked before any compute.
  if (max_sentence_len >= 1 && rag_tokens >= 1 && rag_kernel >= 1) {
    try {
      resolve_strides(rag_strides, max_sentence_len, rag_tokens, 4, rag_kernel,
                      "rag");
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    }
  }
  if (cot_length >= 1 && fuser_kernel >= 1 && !names.empty() &&
      (mode == "rag" || mode == "longtext")) {
    try {
      resolve_strides(fuser_strides, fuser_input_len(), cot_length, 2,
                      fuser_kernel, "fuser");
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    }
  }
}

void Config::finalize(const std::vector<std::string>& overrides) {
  std::vector<std::string> problems;
  for (const auto& kv : overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
      problems.push_back("override '" + kv + "' is not key=value");
      continue;
    }
    apply(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), problems);
  }
  validate(problems);
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " config problem(s): ";
    for (std::size_t i = 0; i < problems.size(); ++i) {
      if (i) msg += "; ";
      msg += problems[i];
    }
    throw ConfigError(msg);
  }
}

std::string Config::serialize() const {
  std::ostringstream o;
  o << "seed = " << seed << "\n";
  o << "d_model = " << d_model << "\n";
  o << "n_layers = " << n_layers << "\n";
  o << "n_heads = " << n_heads << "\n";
  o << "max_seq_len = " << max_seq_len << "\n";
  o << "streams = " << streams << "\n";
  o << "visual_tokens_per_stream = " << visual_tokens_per_stream << "\n";
  o << "feature_dim = " << feature_dim << "\n";
  o << "patch_size = " << patch_size << "\n";
  o << "frames_per_clip = " << frames_per_clip << "\n";
  o << "frame_size = " << frame_size << "\n";
  o << "phys_duration = " << fmt_double(phys_duration) << "\n";
  o << "phys_sample_rate = " << fmt_double(phys_sample_rate) << "\n";
  o << "phys_noise_std = " << fmt_double(phys_noise_std) << "\n";
  o << "max_sentence_len = " << max_sentence_len << "\n";
  o << "rag_tokens = " << rag_tokens << "\n";
  o << "rag_temperature = " << fmt_double(rag_temperature) << "\n";
  o << "rag_kernel = " << rag_kernel << "\n";
  o << "rag_strides = " << rag_strides << "\n";
  o << "cot_length = " << cot_length << "\n";
  o << "lambda_lce = " << fmt_double(lambda_lce) << "\n";
  o << "cot_bounded = " << (cot_bounded ? "true" : "false") << "\n";
  o << "fuser_kernel = " << fuser_kernel << "\n";
  o << "fuser_strides = " << fuser_strides << "\n";
  o << "lr = " << fmt_double(lr) << "\n";
  o << "weight_decay = " << fmt_double(weight_decay) << "\n";
  o << "epochs = " << epochs << "\n";
  o << "batch_size = " << batch_size << "\n";
  o << "max_steps = " << max_steps << "\n";
  o << "mode = " << mode << "\n";
  o << "max_new_tokens = " << max_new_tokens << "\n";
  o << "diag_interval = " << diag_interval << "\n";
  o << "init_scale = " << fmt_double(init_scale) << "\n";
  o << "fuser_init_scale = " << fmt_double(fuser_init_scale) << "\n";
  o << "users = " << users << "\n";
  o << "quirk_sentences = " << quirk_sentences << "\n";
  o << "needle_prefs = " << (needle_prefs ? "true" : "false") << "\n";
  return o.str();
}

namespace {

Config parse_lines(std::istream& in, const std::string& origin) {
  Config cfg;
  std::vector<std::string> problems;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back(origin + ":" + std::to_string(lineno) +
                         ": expected key = value");
      continue;
    }
    cfg.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), problems);
  }
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " config problem(s): ";
    for (std::size_t i = 0; i < problems.size(); ++i) {
      if (i) msg += "; ";
      msg += problems[i];
    }
    throw ConfigError(msg);
  }
  return cfg;
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  return parse_lines(in, path);
}

Config Config::from_string(const std::string& text) {
  std::istringstream in(text);
  return parse_lines(in, "<config echo>");
}

std::vector<std::size_t> solve_strides(std::size_t input_len,
                                       std::size_t output_len,
                                       std::size_t n_layers, std::size_t kw) {
  std::vector<std::size_t> strides;
  std::function<bool(std::size_t, std::size_t)> dfs =
      [&](std::size_t len, std::size_t layer) -> bool {
    if (layer == n_layers) return len == output_len;
    if (len < kw) return false;
    for (std::size_t s = 1; s <= len; ++s) {
      const std::size_t next = (len - kw) / s + 1;
      if (next < output_len) break;  // larger strides only shrink further
      strides.push_back(s);
      if (dfs(next, layer + 1)) return true;
      strides.pop_back();
    }
    return false;
  };
  if (!dfs(input_len, 0)) return {};
  return strides;
}

std::vector<std::size_t> resolve_strides(const std::string& setting,
                                         std::size_t input_len,
                                         std::size_t output_len,
                                         std::size_t n_layers, std::size_t kw,
                                         const std::string& chain_name) {
  if (setting == "auto") {
    auto solved = solve_strides(input_len, output_len, n_layers, kw);
    if (solved.empty())
      throw ConfigError(chain_name + " strides: no " +
                        std::to_string(n_layers) + "-layer chain with kernel " +
                        std::to_string(kw) + " maps length " +
                        std::to_string(input_len) + " to " +
                        std::to_string(output_len));
    return solved;
  }
  auto parts = split_commas(setting);
  if (parts.size() != n_layers)
    throw ConfigError(chain_name + " strides: expected " +
                      std::to_string(n_layers) + " values, got '" + setting +
                      "'");
  std::vector<std::size_t> strides;
  for (const auto& p : parts) {
    std::size_t s = 0;
    if (!parse_size(p, s) || s == 0)
      throw ConfigError(chain_name + " strides: '" + p +
                        "' is not a positive integer");
    strides.push_back(s);
  }
  std::size_t len = input_len;
  for (std::size_t i = 0; i < strides.size(); ++i) {
    if (len < kw)
      throw ConfigError(chain_name + " strides: layer " + std::to_string(i) +
                        " input length " + std::to_string(len) +
                        " is shorter than kernel " + std::to_string(kw));
    len = (len - kw) / strides[i] + 1;
  }
  if (len != output_len)
    throw ConfigError(chain_name + " strides '" + setting + "' map length " +
                      std::to_string(input_len) + " to " + std::to_string(len) +
                      ", need " + std::to_string(output_len));
  return strides;
}

}  // namespace cabin
