#include "cabin/vocab.hpp"

#include <cctype>

#include "cabin/data.hpp"
#include "cabin/errors.hpp"

namespace cabin::data {

std::vector<std::string> Vocab::tokenize(const std::string& text) {
  std::string spaced;
  spaced.reserve(text.size() * 2);
  for (char ch : text) {
    if (ch == '.' || ch == ',' || ch == '!' || ch == '?' || ch == ':') {
      spaced.push_back(' ');
      spaced.push_back(ch);
      spaced.push_back(' ');
    } else {
      spaced.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  std::vector<std::string> out;
  std::string cur;
  for (char ch : spaced) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void Vocab::insert(const std::string& w) {
  if (index_.count(w)) return;
  index_[w] = static_cast<int>(words_.size());
  words_.push_back(w);
}

Vocab::Vocab() {
  insert("<pad>");
  insert("<unk>");
  insert("<bos>");
  insert("<cos>");

  // Closure over everything the grammar can emit, in a fixed source order.
  std::vector<std::string> sources;
  auto add = [&](const std::string& s) { sources.push_back(s); };

  add("the driver emotion is . the driver behavior is . the driver gaze is .");
  add("the driver hands are . the scene is . the condition is .");
  add("the heart rate is bpm . the recommended action is .");
  add("my reaction is . because behavior is . condition is . stay safe .");

  for (const auto& v : emotion_values()) add(v);
  for (const auto& v : behavior_values()) add(v);
  for (const auto& v : gaze_values()) add(v);
  for (const auto& v : hand_values()) add(v);
  for (const auto& v : scene_values()) add(v);
  for (const auto& v : condition_values()) add(v);

  // Questions.
  add("what is the driver emotion ? how does the driver feel ?");
  add("what is the driver behavior ? what is the driver doing ?");
  add("where is the driver gaze ? where is the driver looking ?");
  add("where are the driver hands ? how are the hands placed ?");
  add("what is the scene ? where are we driving ?");
  add("what is the condition ? what is the weather like ?");
  add("what is the heart rate ? how fast is the heart beating ?");
  add("what is the recommended action ? what should the driver do ?");
  add("how should you react ? what is your reaction ?");

  // Decision actions.
  for (int b = 0; b < 5; ++b)
    for (int c = 0; c < 4; ++c) add(decision_action(b, c));

  // Reaction classes.
  for (int t = 0; t < 3; ++t)
    for (int r = 0; r < 3; ++r)
      add(reaction_class(static_cast<Trust>(t), static_cast<Risk>(r)));

  // Preference documents.
  for (int t = 0; t < 3; ++t) add(trust_sentence(static_cast<Trust>(t)));
  for (int i = 0; i < 3; ++i)
    add(interactivity_sentence(static_cast<Interactivity>(i)));
  for (const auto& q : quirk_pool()) add(q);

  // Heart-rate numerals.
  for (int hr = kHrMin; hr <= kHrMax; ++hr) add(std::to_string(hr));

  for (const auto& s : sources)
    for (const auto& w : tokenize(s)) insert(w);
}

const Vocab& Vocab::shared() {
  static const Vocab v;
  return v;
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size())
    throw IndexError("vocab id " + std::to_string(id) + " out of range");
  return words_[static_cast<std::size_t>(id)];
}

int Vocab::id_of(const std::string& w) const {
  auto it = index_.find(w);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : tokenize(text)) ids.push_back(id_of(w));
  return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += word(ids[i]);
  }
  return out;
}

}  // namespace cabin::data
