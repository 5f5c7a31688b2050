#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cabin/config.hpp"
#include "cabin/kinds.hpp"
#include "cabin/ppg.hpp"
#include "cabin/vocab.hpp"

namespace cabin::data {

// Label families. Values render verbatim into captions and answers, so each
// identifier is a single vocabulary token.
inline const std::vector<std::string>& emotion_values() {
  static const std::vector<std::string> v{"calm", "angry", "anxious", "happy",
                                          "tired"};
  return v;
}
inline const std::vector<std::string>& behavior_values() {
  static const std::vector<std::string> v{"normal_drive", "phone_use",
                                          "eating", "yawning", "looking_away"};
  return v;
}
inline const std::vector<std::string>& gaze_values() {
  static const std::vector<std::string> v{"road", "mirror", "lap",
                                          "passenger"};
  return v;
}
inline const std::vector<std::string>& hand_values() {
  static const std::vector<std::string> v{"wheel_both", "wheel_one",
                                          "off_wheel"};
  return v;
}
inline const std::vector<std::string>& scene_values() {
  static const std::vector<std::string> v{"highway", "urban", "parking",
                                          "rural"};
  return v;
}
inline const std::vector<std::string>& condition_values() {
  static const std::vector<std::string> v{"clear", "rain", "night", "fog"};
  return v;
}

constexpr int kHrMin = 45;
constexpr int kHrMax = 120;

// One rendered camera stream: frames-major, then rows, cols, channels.
// Values live in [0,1] and are quantized to f32 at generation time so the
// in-memory record equals its on-disk blob bit for bit.
struct Clip {
  std::size_t frames = 0, height = 0, width = 0, channels = 0;
  std::vector<float> values;
  float at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) const {
    return values[((f * height + y) * width + x) * channels + c];
  }
};

struct SceneRecord {
  std::uint64_t id = 0;
  int emotion = 0, behavior = 0, gaze = 0, hand = 0, scene = 0, condition = 0;
  int hr = kHrMin;
  // Indexed by StreamKind for the six frame streams; Phys lives in phys.
  std::array<Clip, 6> clips;
  PhysSignal phys;
};

enum class Task : int {
  Emotion = 0,
  Behavior,
  Gaze,
  Hand,
  Scene,
  Condition,
  Physiology,
  Decision,
  AlignedReaction,
};
constexpr int kNumTasks = 9;
const char* task_name(Task t);
Task task_from_name(const std::string& name);

struct QAPair {
  std::uint64_t record_id = 0;
  Task task = Task::Emotion;
  std::string question;
  std::string answer;
  std::vector<std::pair<std::string, std::string>> slots;
};

enum class Interactivity : int { Minimal = 0, Moderate, Chatty };
enum class Trust : int { Silent = 0, Warn, Intervene };
enum class Risk : int { Low = 0, Medium, High };

struct PreferenceProfile {
  std::string user_id;
  Interactivity interactivity = Interactivity::Moderate;
  Trust trust = Trust::Warn;
  std::vector<std::string> quirks;
  // Needle docs drop the interactivity sentence so trust is the single
  // informative line.
  bool needle = false;
  // Sentence order of the rendered document, fixed at profile creation.
  std::vector<std::size_t> sentence_order;
};

// Scene generation. Labels are uniform except the documented correlation:
// a tired driver draws yawning with 3x base weight. Clips are procedural
// patterns positioned by label value; phys comes from generate_ppg.
SceneRecord generate_scene(const Config& cfg, std::uint64_t seed,
                           std::uint64_t id);

// Deterministic caption: one sentence per annotation family in fixed order
// condition, scene, emotion, behavior, gaze, hand, physiology.
std::string render_caption(const SceneRecord& rec);

// QA for the eight label-derived tasks. AlignedReaction goes through
// build_aligned_response instead (it needs a profile).
QAPair build_qa(const SceneRecord& rec, Task task, std::uint64_t seed);

// Fixed lookup from (behavior, condition) to a recommended action phrase.
const std::string& decision_action(int behavior, int condition);

// Risk tier from the record's state, first matching rule wins.
Risk risk_of(const SceneRecord& rec);

// Reaction class identifiers, one per (trust, risk) cell; all nine distinct.
const std::string& reaction_class(Trust t, Risk r);

// Super-aligned response: class from (trust, risk), verbosity from
// interactivity (minimal = 1 sentence, moderate = 2, chatty = 4).
QAPair build_aligned_response(const SceneRecord& rec,
                              const PreferenceProfile& profile,
                              std::uint64_t seed);

// Preference profiles and their rendered documents. In needle mode every
// user gets Moderate interactivity and the trust sentence is the only
// informative line among the quirk distractors.
PreferenceProfile make_profile(const Config& cfg, std::uint64_t seed,
                               std::size_t user_index);
std::string render_pref_doc(const PreferenceProfile& profile);
const std::vector<std::string>& quirk_pool();
const std::string& trust_sentence(Trust t);
const std::string& interactivity_sentence(Interactivity i);

// Grammar inverse: extracts (attribute, value) propositions from template
// sentences. Unparseable spans contribute nothing.
std::vector<std::pair<std::string, std::string>> parse_propositions(
    const std::string& text);

}  // namespace cabin::data
