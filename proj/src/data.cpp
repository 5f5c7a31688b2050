#include "cabin/data.hpp"

#include <algorithm>
#include <cmath>

#include "cabin/random.hpp"

namespace cabin::data {

const char* task_name(Task t) {
  switch (t) {
    case Task::Emotion: return "emotion";
    case Task::Behavior: return "behavior";
    case Task::Gaze: return "gaze";
    case Task::Hand: return "hand";
    case Task::Scene: return "scene";
    case Task::Condition: return "condition";
    case Task::Physiology: return "physiology";
    case Task::Decision: return "decision";
    case Task::AlignedReaction: return "aligned_reaction";
  }
  throw InternalError("bad task");
}

Task task_from_name(const std::string& name) {
  for (int i = 0; i < kNumTasks; ++i)
    if (name == task_name(static_cast<Task>(i))) return static_cast<Task>(i);
  throw DataError("unknown task name: " + name);
}

namespace {

constexpr double kBackground = 0.08;
constexpr double kNoiseStd = 0.02;
// Slight per-channel tint so RGB clips are not channel-degenerate.
constexpr double kChannelGain[3] = {1.0, 0.9, 0.8};

// Band intensity encodes the label value. The stub encoders mean-pool over
// patch positions, so position alone would wash out; intensity survives any
// permutation-invariant pooling.
double band_level(int v, int n) {
  return n > 1 ? 0.25 + 0.60 * static_cast<double>(v) / (n - 1) : 0.85;
}

Clip blank_clip(const Config& cfg, std::size_t channels) {
  Clip c;
  c.frames = cfg.frames_per_clip;
  c.height = cfg.frame_size;
  c.width = cfg.frame_size;
  c.channels = channels;
  c.values.assign(c.frames * c.height * c.width * c.channels, 0.0f);
  return c;
}

// Paints intensity into the fractional rectangle on every frame.
void paint(Clip& clip, double y0, double y1, double x0, double x1,
           double intensity) {
  const auto ry0 = static_cast<std::size_t>(std::floor(y0 * clip.height));
  const auto ry1 = static_cast<std::size_t>(std::ceil(y1 * clip.height));
  const auto rx0 = static_cast<std::size_t>(std::floor(x0 * clip.width));
  const auto rx1 = static_cast<std::size_t>(std::ceil(x1 * clip.width));
  for (std::size_t f = 0; f < clip.frames; ++f)
    for (std::size_t y = ry0; y < ry1 && y < clip.height; ++y)
      for (std::size_t x = rx0; x < rx1 && x < clip.width; ++x)
        for (std::size_t c = 0; c < clip.channels; ++c) {
          auto& v = clip.values[((f * clip.height + y) * clip.width + x) *
                                    clip.channels +
                                c];
          v = static_cast<float>(intensity * kChannelGain[c % 3]);
        }
}

// Vertical band: horizontal position and intensity both encode value v of n.
void paint_value_band_cols(Clip& clip, int v, int n, double y0, double y1,
                           double intensity) {
  const double x0 = static_cast<double>(v) / n;
  const double x1 = static_cast<double>(v + 1) / n;
  paint(clip, y0, y1, x0, x1, intensity);
}

// Horizontal band: vertical position and intensity both encode value v of n.
void paint_value_band_rows(Clip& clip, int v, int n, double x0, double x1,
                           double intensity) {
  const double y0 = static_cast<double>(v) / n;
  const double y1 = static_cast<double>(v + 1) / n;
  paint(clip, y0, y1, x0, x1, intensity);
}

// Background plus seeded per-pixel noise, then clamp and quantize.
void finish_clip(Clip& clip, Rng& rng) {
  for (auto& v : clip.values) {
    double x = kBackground + v + kNoiseStd * rng.normal();
    x = std::min(1.0, std::max(0.0, x));
    v = static_cast<float>(x);
  }
}

Clip render_stream(const Config& cfg, StreamKind kind, const SceneRecord& rec,
                   Rng& rng) {
  Clip clip = blank_clip(cfg, stream_channels(kind));
  switch (kind) {
    case StreamKind::FrontRGB:
      paint_value_band_cols(clip, rec.behavior, 5, 0.125, 0.875,
                            band_level(rec.behavior, 5));
      break;
    case StreamKind::OutRGB:
      // Scene band on top, condition band below, shapes and intensity scales
      // kept distinct so the two annotations never alias under pooling.
      paint_value_band_cols(clip, rec.scene, 4, 0.0, 0.45,
                            0.28 + 0.14 * rec.scene);
      paint_value_band_cols(clip, rec.condition, 4, 0.60, 0.95,
                            0.35 + 0.14 * rec.condition);
      break;
    case StreamKind::Face:
      paint_value_band_rows(clip, rec.emotion, 5, 0.125, 0.875,
                            band_level(rec.emotion, 5));
      break;
    case StreamKind::Hand: {
      const double level = band_level(rec.hand, 3);
      if (rec.hand == 0) {  // wheel_both: two upper blobs
        paint(clip, 0.19, 0.38, 0.19, 0.38, level);
        paint(clip, 0.19, 0.38, 0.56, 0.75, level);
      } else if (rec.hand == 1) {  // wheel_one: left blob only
        paint(clip, 0.19, 0.38, 0.19, 0.38, level);
      } else {  // off_wheel: wide blob in the lower region
        paint(clip, 0.63, 0.88, 0.31, 0.69, level);
      }
      break;
    }
    case StreamKind::NIR: {
      // Gaze quadrant.
      const double y0 = (rec.gaze / 2) * 0.5 + 0.1;
      const double x0 = (rec.gaze % 2) * 0.5 + 0.1;
      paint(clip, y0, y0 + 0.3, x0, x0 + 0.3, band_level(rec.gaze, 4));
      break;
    }
    case StreamKind::Depth:
      paint_value_band_rows(clip, rec.hand, 3, 0.125, 0.875,
                            band_level(rec.hand, 3));
      break;
    case StreamKind::Phys:
      throw InternalError("phys stream is not a frame clip");
  }
  finish_clip(clip, rng);
  return clip;
}

}  // namespace

SceneRecord generate_scene(const Config& cfg, std::uint64_t seed,
                           std::uint64_t id) {
  SceneRecord rec;
  rec.id = id;
  Rng rng(Rng::mix(seed, id));
  rec.emotion = static_cast<int>(rng.uniform_int(5));
  if (emotion_values()[rec.emotion] == "tired") {
    // yawning carries 3x base weight for tired drivers
    static const int weighted[7] = {0, 1, 2, 3, 3, 3, 4};
    rec.behavior = weighted[rng.uniform_int(7)];
  } else {
    rec.behavior = static_cast<int>(rng.uniform_int(5));
  }
  rec.gaze = static_cast<int>(rng.uniform_int(4));
  rec.hand = static_cast<int>(rng.uniform_int(3));
  rec.scene = static_cast<int>(rng.uniform_int(4));
  rec.condition = static_cast<int>(rng.uniform_int(4));
  rec.hr = kHrMin + static_cast<int>(rng.uniform_int(kHrMax - kHrMin + 1));

  for (int k = 0; k < 6; ++k) {
    Rng crng(Rng::mix(Rng::mix(seed, id), 1000 + static_cast<std::uint64_t>(k)));
    rec.clips[static_cast<std::size_t>(k)] =
        render_stream(cfg, static_cast<StreamKind>(k), rec, crng);
  }
  rec.phys = generate_ppg(rec.hr, cfg.phys_duration, cfg.phys_sample_rate,
                          cfg.phys_noise_std, Rng::mix(Rng::mix(seed, id), 2000));
  return rec;
}

std::string render_caption(const SceneRecord& rec) {
  std::string s;
  s += "the condition is " + condition_values()[rec.condition] + " . ";
  s += "the scene is " + scene_values()[rec.scene] + " . ";
  s += "the driver emotion is " + emotion_values()[rec.emotion] + " . ";
  s += "the driver behavior is " + behavior_values()[rec.behavior] + " . ";
  s += "the driver gaze is " + gaze_values()[rec.gaze] + " . ";
  s += "the driver hands are " + hand_values()[rec.hand] + " . ";
  s += "the heart rate is " + std::to_string(rec.hr) + " bpm .";
  return s;
}

namespace {

const std::vector<std::string>& question_set(Task t) {
  static const std::vector<std::string> sets[kNumTasks] = {
      {"what is the driver emotion ?", "how does the driver feel ?"},
      {"what is the driver behavior ?", "what is the driver doing ?"},
      {"where is the driver gaze ?", "where is the driver looking ?"},
      {"where are the driver hands ?", "how are the hands placed ?"},
      {"what is the scene ?", "where are we driving ?"},
      {"what is the condition ?", "what is the weather like ?"},
      {"what is the heart rate ?", "how fast is the heart beating ?"},
      {"what is the recommended action ?", "what should the driver do ?"},
      {"how should you react ?", "what is your reaction ?"},
  };
  return sets[static_cast<int>(t)];
}

std::string pick_question(Task t, std::uint64_t record_id,
                          std::uint64_t seed) {
  const auto& set = question_set(t);
  Rng rng(Rng::mix(Rng::mix(seed, record_id),
                   3000 + static_cast<std::uint64_t>(t)));
  return set[rng.uniform_int(set.size())];
}

}  // namespace

const std::string& decision_action(int behavior, int condition) {
  static const std::string table[5][4] = {
      // clear, rain, night, fog
      {"keep steady speed", "increase following distance", "keep headlights on",
       "slow down and use fog lights"},
      {"put the phone away", "put the phone away and slow down",
       "put the phone away immediately", "stop phone use and focus"},
      {"finish eating when parked", "stop eating and hold the wheel",
       "stop eating and watch the road", "stop eating and slow down"},
      {"take a short break", "take a break at the next stop",
       "suggest a rest stop", "pull over and rest"},
      {"eyes back on the road", "eyes on the road and slow down",
       "eyes on the road now", "stop and refocus"},
  };
  if (behavior < 0 || behavior >= 5 || condition < 0 || condition >= 4)
    throw IndexError("decision lookup out of range");
  return table[behavior][condition];
}

QAPair build_qa(const SceneRecord& rec, Task task, std::uint64_t seed) {
  QAPair qa;
  qa.record_id = rec.id;
  qa.task = task;
  qa.question = pick_question(task, rec.id, seed);
  switch (task) {
    case Task::Emotion:
      qa.answer = "the driver emotion is " + emotion_values()[rec.emotion] + " .";
      qa.slots = {{"emotion", emotion_values()[rec.emotion]}};
      break;
    case Task::Behavior:
      qa.answer =
          "the driver behavior is " + behavior_values()[rec.behavior] + " .";
      qa.slots = {{"behavior", behavior_values()[rec.behavior]}};
      break;
    case Task::Gaze:
      qa.answer = "the driver gaze is " + gaze_values()[rec.gaze] + " .";
      qa.slots = {{"gaze", gaze_values()[rec.gaze]}};
      break;
    case Task::Hand:
      qa.answer = "the driver hands are " + hand_values()[rec.hand] + " .";
      qa.slots = {{"hand", hand_values()[rec.hand]}};
      break;
    case Task::Scene:
      qa.answer = "the scene is " + scene_values()[rec.scene] + " .";
      qa.slots = {{"scene", scene_values()[rec.scene]}};
      break;
    case Task::Condition:
      qa.answer = "the condition is " + condition_values()[rec.condition] + " .";
      qa.slots = {{"condition", condition_values()[rec.condition]}};
      break;
    case Task::Physiology:
      qa.answer = "the heart rate is " + std::to_string(rec.hr) + " bpm .";
      qa.slots = {{"hr", std::to_string(rec.hr)}};
      break;
    case Task::Decision: {
      const auto& action = decision_action(rec.behavior, rec.condition);
      qa.answer = "the recommended action is " + action + " .";
      qa.slots = {{"action", action}};
      break;
    }
    case Task::AlignedReaction:
      throw InternalError("aligned_reaction goes through build_aligned_response");
  }
  return qa;
}

Risk risk_of(const SceneRecord& rec) {
  const auto& b = behavior_values()[rec.behavior];
  const auto& h = hand_values()[rec.hand];
  const auto& c = condition_values()[rec.condition];
  if (b == "phone_use" || b == "looking_away" || h == "off_wheel" ||
      (b == "yawning" && c == "night"))
    return Risk::High;
  if (b == "yawning" || b == "eating" || h == "wheel_one" || c == "rain" ||
      c == "fog")
    return Risk::Medium;
  return Risk::Low;
}

const std::string& reaction_class(Trust t, Risk r) {
  static const std::string table[3][3] = {
      {"quiet_ok", "quiet_watch", "quiet_alert"},
      {"note_ok", "soft_warning", "strong_warning"},
      {"ready_ok", "assist_warning", "intervene_now"},
  };
  return table[static_cast<int>(t)][static_cast<int>(r)];
}

QAPair build_aligned_response(const SceneRecord& rec,
                              const PreferenceProfile& profile,
                              std::uint64_t seed) {
  QAPair qa;
  qa.record_id = rec.id;
  qa.task = Task::AlignedReaction;
  qa.question = pick_question(Task::AlignedReaction, rec.id, seed);
  const std::string& cls = reaction_class(profile.trust, risk_of(rec));
  qa.answer = "my reaction is " + cls + " .";
  if (profile.interactivity != Interactivity::Minimal)
    qa.answer += " because behavior is " + behavior_values()[rec.behavior] + " .";
  if (profile.interactivity == Interactivity::Chatty)
    qa.answer +=
        " condition is " + condition_values()[rec.condition] + " . stay safe .";
  qa.slots = {{"reaction_class", cls}};
  return qa;
}

const std::vector<std::string>& quirk_pool() {
  static const std::vector<std::string> pool{
      "i like jazz on long drives .",
      "my favorite color is blue .",
      "i drink coffee every morning .",
      "the car smells like pine .",
      "my dog rides in the back seat .",
      "i collect old maps .",
      "weekends are for hiking .",
      "i park near the big oak tree .",
      "my cousin lives in the city .",
      "the radio volume stays low .",
      "i keep an umbrella in the trunk .",
      "my jacket is waterproof .",
      "i enjoy quiet mornings .",
      "the left window sticks a little .",
      "i rotate my tires on schedule .",
      "my lunch is usually a sandwich .",
      "i hum along to old songs .",
      "the glove box holds spare batteries .",
      "i wave at neighbors on my street .",
      "my sunglasses live on the dashboard .",
      "i stretch before long trips .",
      "the back seat carries a blanket .",
      "i check the mirrors twice .",
      "my water bottle is always full .",
  };
  return pool;
}

const std::string& trust_sentence(Trust t) {
  static const std::string s[3] = {
      "please stay silent unless i ask .",
      "warn me when something is wrong .",
      "intervene whenever the risk is high .",
  };
  return s[static_cast<int>(t)];
}

const std::string& interactivity_sentence(Interactivity i) {
  static const std::string s[3] = {
      "keep answers minimal .",
      "a moderate amount of detail is fine .",
      "i enjoy chatty detailed replies .",
  };
  return s[static_cast<int>(i)];
}

PreferenceProfile make_profile(const Config& cfg, std::uint64_t seed,
                               std::size_t user_index) {
  PreferenceProfile p;
  p.user_id = "user" + std::to_string(user_index);
  p.needle = cfg.needle_prefs;
  Rng rng(Rng::mix(seed, 5000 + user_index));
  if (cfg.needle_prefs) {
    // Balanced trust assignment so every level appears across users.
    p.trust = static_cast<Trust>(user_index % 3);
    p.interactivity = Interactivity::Moderate;
  } else {
    p.interactivity = static_cast<Interactivity>(rng.uniform_int(3));
    p.trust = static_cast<Trust>(rng.uniform_int(3));
  }
  const auto& pool = quirk_pool();
  const std::size_t n = std::min(cfg.quirk_sentences, pool.size());
  for (std::size_t idx : rng.sample_indices(pool.size(), n))
    p.quirks.push_back(pool[idx]);
  // Shuffled sentence order so the informative line has no fixed position.
  const std::size_t total = 1 + (p.needle ? 0 : 1) + p.quirks.size();
  p.sentence_order.resize(total);
  for (std::size_t i = 0; i < total; ++i) p.sentence_order[i] = i;
  rng.shuffle(p.sentence_order);
  return p;
}

std::string render_pref_doc(const PreferenceProfile& profile) {
  std::vector<std::string> sentences;
  sentences.push_back(trust_sentence(profile.trust));
  if (!profile.needle)
    sentences.push_back(interactivity_sentence(profile.interactivity));
  for (const auto& q : profile.quirks) sentences.push_back(q);

  std::string doc = "user:" + profile.user_id + "\n";
  for (std::size_t pos : profile.sentence_order) {
    if (pos < sentences.size()) doc += sentences[pos] + "\n";
  }
  return doc;
}

std::vector<std::pair<std::string, std::string>> parse_propositions(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> props;
  auto tokens = Vocab::tokenize(text);
  std::vector<std::vector<std::string>> sentences(1);
  for (const auto& t : tokens) {
    if (t == "." || t == "!" || t == "?") {
      if (!sentences.back().empty()) sentences.emplace_back();
    } else {
      sentences.back().push_back(t);
    }
  }
  for (auto& s : sentences) {
    // Strip leading connectives and determiners.
    std::size_t i = 0;
    while (i < s.size() && (s[i] == "because" || s[i] == "the" ||
                            s[i] == "my" || s[i] == "driver"))
      ++i;
    if (i >= s.size()) continue;
    std::string attr;
    std::size_t value_start = 0;
    if (i + 2 < s.size() && s[i] == "heart" && s[i + 1] == "rate" &&
        s[i + 2] == "is") {
      attr = "heart rate";
      value_start = i + 3;
    } else if (i + 2 < s.size() && s[i] == "recommended" &&
               s[i + 1] == "action" && s[i + 2] == "is") {
      attr = "recommended action";
      value_start = i + 3;
    } else if (i + 1 < s.size() && (s[i + 1] == "is" || s[i + 1] == "are")) {
      static const char* attrs[] = {"emotion", "behavior", "gaze", "hands",
                                    "scene",   "condition", "reaction"};
      for (const char* a : attrs)
        if (s[i] == a) {
          attr = a;
          value_start = i + 2;
          break;
        }
    }
    if (attr.empty() || value_start >= s.size()) continue;
    std::string value;
    for (std::size_t j = value_start; j < s.size(); ++j) {
      if (j > value_start) value.push_back(' ');
      value += s[j];
    }
    props.emplace_back(attr, value);
  }
  return props;
}

}  // namespace cabin::data
