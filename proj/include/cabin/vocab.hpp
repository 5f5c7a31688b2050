#pragma once

#include <map>
#include <string>
#include <vector>

namespace cabin::data {

// Word-level vocabulary over the closed template grammar. Ids are assigned
// in first-appearance order over a fixed source list, so the table is
// identical across runs and platforms.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kCos = 3;

  // The shared instance covering every string the data module can emit.
  static const Vocab& shared();

  std::size_t size() const { return words_.size(); }
  const std::string& word(int id) const;
  int id_of(const std::string& w) const;  // kUnk when absent

  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;

  // Lowercases and splits on whitespace with . , ! ? : as their own tokens.
  static std::vector<std::string> tokenize(const std::string& text);

 private:
  Vocab();
  void insert(const std::string& w);
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

}  // namespace cabin::data
