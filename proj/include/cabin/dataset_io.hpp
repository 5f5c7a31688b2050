#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cabin/config.hpp"
#include "cabin/data.hpp"

namespace cabin::data {

// One manifest line joined with its (shared) scene record.
struct Sample {
  std::shared_ptr<SceneRecord> record;
  QAPair qa;
  std::string user_id;
};

constexpr std::uint32_t kDatasetSchema = 1;

// Split routing by record id: 8 -> val, 9 -> test, everything else train.
std::string split_of(std::uint64_t record_id);

// Clip + phys container, checksummed; labels travel in the manifest.
std::vector<std::uint8_t> encode_blob(const SceneRecord& rec);
// Fills clips/phys/id of rec from bytes; throws DataError on checksum or
// format mismatch, naming the record.
void decode_blob(const std::vector<std::uint8_t>& bytes, SceneRecord& rec);

struct GenSummary {
  std::size_t records = 0;
  std::size_t users = 0;
  std::map<std::string, std::size_t> lines_per_split;
  std::map<std::string, std::string> manifest_fnv;  // split -> hex checksum
};

// Generates the whole dataset directory: train/val/test.jsonl manifests,
// blobs/, prefs/, meta.json. Deterministic in (cfg, seed).
GenSummary write_dataset(const Config& cfg, const std::string& out_dir,
                         std::size_t n_records, std::uint64_t seed);

// Loads one split; every line re-verifies its blob checksum. Records shared
// across the 9 task lines are loaded once.
std::vector<Sample> read_split(const std::string& dir,
                               const std::string& split);

// Preference documents: user id -> raw body text (without the user: line).
std::map<std::string, std::string> read_prefs(const std::string& prefs_dir);

}  // namespace cabin::data
