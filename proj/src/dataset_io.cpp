#include "cabin/dataset_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cabin/io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace cabin::data {

namespace {

constexpr std::uint32_t kBlobMagic = 0x424c4243;  // "CBLB" little-endian

std::string blob_name(std::uint64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "rec%08llu.bin",
                static_cast<unsigned long long>(id));
  return buf;
}

int label_index(const std::vector<std::string>& values,
                const std::string& value, const char* family) {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] == value) return static_cast<int>(i);
  throw DataError(std::string("unknown ") + family + " label: " + value);
}

}  // namespace

std::string split_of(std::uint64_t record_id) {
  switch (record_id % 10) {
    case 8: return "val";
    case 9: return "test";
    default: return "train";
  }
}

std::vector<std::uint8_t> encode_blob(const SceneRecord& rec) {
  std::vector<std::uint8_t> out;
  io::put_u32(out, kBlobMagic);
  io::put_u32(out, kDatasetSchema);
  io::put_u64(out, rec.id);
  out.push_back(6);  // frame streams
  for (int k = 0; k < 6; ++k) {
    const Clip& c = rec.clips[static_cast<std::size_t>(k)];
    out.push_back(static_cast<std::uint8_t>(k));
    io::put_u16(out, static_cast<std::uint16_t>(c.frames));
    io::put_u16(out, static_cast<std::uint16_t>(c.height));
    io::put_u16(out, static_cast<std::uint16_t>(c.width));
    io::put_u16(out, static_cast<std::uint16_t>(c.channels));
    for (float v : c.values) io::put_f32(out, v);
  }
  io::put_u32(out, static_cast<std::uint32_t>(rec.phys.samples.size()));
  io::put_f64(out, rec.phys.sample_rate);
  io::put_f64(out, rec.phys.true_hr);
  for (float v : rec.phys.samples) io::put_f32(out, v);
  io::put_u64(out, io::fnv1a(out.data(), out.size()));
  return out;
}

void decode_blob(const std::vector<std::uint8_t>& bytes, SceneRecord& rec) {
  if (bytes.size() < 8 + 8 + 8)
    throw DataError("blob too short for record " + std::to_string(rec.id));
  const std::uint64_t stored_sum =
      [&] {
        io::Reader tail{bytes, bytes.size() - 8};
        return tail.u64();
      }();
  const std::uint64_t actual = io::fnv1a(bytes.data(), bytes.size() - 8);
  if (stored_sum != actual)
    throw DataError("blob checksum mismatch for record " +
                    std::to_string(rec.id));
  io::Reader r{bytes};
  if (r.u32() != kBlobMagic)
    throw DataError("bad blob magic for record " + std::to_string(rec.id));
  const std::uint32_t version = r.u32();
  if (version != kDatasetSchema)
    throw DataError("unsupported blob schema " + std::to_string(version) +
                    " for record " + std::to_string(rec.id));
  rec.id = r.u64();
  const std::uint8_t n_streams = r.u8();
  if (n_streams != 6)
    throw DataError("blob stream count " + std::to_string(n_streams) +
                    " for record " + std::to_string(rec.id));
  for (int k = 0; k < 6; ++k) {
    const std::uint8_t kind = r.u8();
    if (kind != k)
      throw DataError("blob stream order broken for record " +
                      std::to_string(rec.id));
    Clip& c = rec.clips[static_cast<std::size_t>(k)];
    c.frames = r.u16();
    c.height = r.u16();
    c.width = r.u16();
    c.channels = r.u16();
    const std::size_t n = c.frames * c.height * c.width * c.channels;
    c.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) c.values[i] = r.f32();
  }
  const std::uint32_t t = r.u32();
  rec.phys.sample_rate = r.f64();
  rec.phys.true_hr = r.f64();
  rec.phys.samples.resize(t);
  for (std::uint32_t i = 0; i < t; ++i) rec.phys.samples[i] = r.f32();
}

namespace {

ordered_json sample_line(const SceneRecord& rec, const QAPair& qa,
                         const std::string& user_id, const std::string& blob,
                         std::uint64_t blob_fnv) {
  ordered_json j;
  j["schema"] = kDatasetSchema;
  j["record"] = rec.id;
  j["user"] = user_id;
  j["task"] = task_name(qa.task);
  j["question"] = qa.question;
  j["answer"] = qa.answer;
  ordered_json slots = ordered_json::array();
  for (const auto& [name, value] : qa.slots)
    slots.push_back(ordered_json::array({name, value}));
  j["slots"] = slots;
  ordered_json labels;
  labels["emotion"] = emotion_values()[rec.emotion];
  labels["behavior"] = behavior_values()[rec.behavior];
  labels["gaze"] = gaze_values()[rec.gaze];
  labels["hand"] = hand_values()[rec.hand];
  labels["scene"] = scene_values()[rec.scene];
  labels["condition"] = condition_values()[rec.condition];
  labels["hr"] = rec.hr;
  j["labels"] = labels;
  j["blob"] = blob;
  j["blob_fnv"] = io::hex64(blob_fnv);
  return j;
}

}  // namespace

GenSummary write_dataset(const Config& cfg, const std::string& out_dir,
                         std::size_t n_records, std::uint64_t seed) {
  fs::create_directories(fs::path(out_dir) / "blobs");
  fs::create_directories(fs::path(out_dir) / "prefs");

  std::vector<PreferenceProfile> profiles;
  for (std::size_t u = 0; u < cfg.users; ++u) {
    profiles.push_back(make_profile(cfg, seed, u));
    io::write_file((fs::path(out_dir) / "prefs" /
                    (profiles.back().user_id + ".txt")).string(),
                   render_pref_doc(profiles.back()));
  }

  std::map<std::string, std::string> manifests;  // split -> content
  GenSummary summary;
  summary.records = n_records;
  summary.users = cfg.users;

  for (std::uint64_t id = 0; id < n_records; ++id) {
    SceneRecord rec = generate_scene(cfg, seed, id);
    auto blob = encode_blob(rec);
    const std::string rel = "blobs/" + blob_name(id);
    io::write_binary((fs::path(out_dir) / rel).string(), blob);
    const std::uint64_t blob_sum = io::fnv1a(blob.data(), blob.size());

    const auto& profile = profiles[id % profiles.size()];
    const std::string split = split_of(id);
    for (int t = 0; t < kNumTasks; ++t) {
      const Task task = static_cast<Task>(t);
      QAPair qa = task == Task::AlignedReaction
                      ? build_aligned_response(rec, profile, seed)
                      : build_qa(rec, task, seed);
      manifests[split] +=
          sample_line(rec, qa, profile.user_id, rel, blob_sum).dump() + "\n";
      summary.lines_per_split[split] += 1;
    }
  }

  for (const char* split : {"train", "val", "test"}) {
    const std::string& content = manifests[split];  // may be empty
    io::write_file((fs::path(out_dir) / (std::string(split) + ".jsonl")).string(),
                   content);
    summary.manifest_fnv[split] = io::hex64(io::fnv1a(content));
    summary.lines_per_split.try_emplace(split, 0);
  }

  ordered_json meta;
  meta["schema"] = kDatasetSchema;
  meta["seed"] = seed;
  meta["records"] = n_records;
  meta["users"] = cfg.users;
  meta["tasks_per_record"] = kNumTasks;
  ordered_json counts;
  for (const char* split : {"train", "val", "test"})
    counts[split] = summary.lines_per_split[split];
  meta["lines"] = counts;
  ordered_json sums;
  for (const char* split : {"train", "val", "test"})
    sums[split] = summary.manifest_fnv[split];
  meta["manifest_fnv"] = sums;
  meta["config"] = cfg.serialize();
  io::write_file((fs::path(out_dir) / "meta.json").string(),
                 meta.dump(2) + "\n");
  return summary;
}

std::vector<Sample> read_split(const std::string& dir,
                               const std::string& split) {
  const std::string path = (fs::path(dir) / (split + ".jsonl")).string();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);

  std::map<std::uint64_t, std::shared_ptr<SceneRecord>> cache;
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": bad manifest line: " + e.what());
    }
    if (!j.contains("schema") || j["schema"].get<std::uint32_t>() != kDatasetSchema)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": unknown manifest schema");
    const auto id = j["record"].get<std::uint64_t>();

    auto it = cache.find(id);
    std::shared_ptr<SceneRecord> rec;
    if (it != cache.end()) {
      rec = it->second;
    } else {
      rec = std::make_shared<SceneRecord>();
      rec->id = id;
      const auto labels = j["labels"];
      rec->emotion = label_index(emotion_values(),
                                 labels["emotion"].get<std::string>(), "emotion");
      rec->behavior = label_index(
          behavior_values(), labels["behavior"].get<std::string>(), "behavior");
      rec->gaze =
          label_index(gaze_values(), labels["gaze"].get<std::string>(), "gaze");
      rec->hand =
          label_index(hand_values(), labels["hand"].get<std::string>(), "hand");
      rec->scene = label_index(scene_values(),
                               labels["scene"].get<std::string>(), "scene");
      rec->condition =
          label_index(condition_values(),
                      labels["condition"].get<std::string>(), "condition");
      rec->hr = labels["hr"].get<int>();
      const auto blob_rel = j["blob"].get<std::string>();
      auto bytes = io::read_binary((fs::path(dir) / blob_rel).string());
      const auto want = j["blob_fnv"].get<std::string>();
      if (io::hex64(io::fnv1a(bytes.data(), bytes.size())) != want)
        throw DataError("blob checksum mismatch for record " +
                        std::to_string(id));
      decode_blob(bytes, *rec);
      if (rec->id != id)
        throw DataError("blob/manifest id mismatch for record " +
                        std::to_string(id));
      cache[id] = rec;
    }

    Sample s;
    s.record = rec;
    s.user_id = j["user"].get<std::string>();
    s.qa.record_id = id;
    s.qa.task = task_from_name(j["task"].get<std::string>());
    s.qa.question = j["question"].get<std::string>();
    s.qa.answer = j["answer"].get<std::string>();
    for (const auto& slot : j["slots"])
      s.qa.slots.emplace_back(slot[0].get<std::string>(),
                              slot[1].get<std::string>());
    out.push_back(std::move(s));
  }
  return out;
}

std::map<std::string, std::string> read_prefs(const std::string& prefs_dir) {
  if (!fs::is_directory(prefs_dir))
    throw IoError("prefs directory not found: " + prefs_dir);
  std::map<std::string, std::string> docs;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(prefs_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::string text = io::read_file(f.string());
    auto nl = text.find('\n');
    std::string first = nl == std::string::npos ? text : text.substr(0, nl);
    if (first.rfind("user:", 0) != 0)
      throw DataError("preference file " + f.string() +
                      " must start with user:<id>");
    std::string user_id = first.substr(5);
    std::string body = nl == std::string::npos ? "" : text.substr(nl + 1);
    docs[user_id] = body;
  }
  return docs;
}

}  // namespace cabin::data
