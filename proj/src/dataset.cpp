#include "ctrgan/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "ctrgan/errors.hpp"
#include "ctrgan/hashing.hpp"
#include "ctrgan/pam.hpp"

namespace ctrgan::gait {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d.pam", i);
  return buf;
}

std::string rgb_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "rgb_%06d.ppm", i);
  return buf;
}

}  // namespace

const SequenceRef* DatasetManifest::find(const std::string& subject_id,
                                         const std::string& view) const {
  for (const auto& s : sequences)
    if (s.subject_id == subject_id && s.view == view) return &s;
  return nullptr;
}

std::vector<std::string> DatasetManifest::subject_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : sequences)
    if (std::find(ids.begin(), ids.end(), s.subject_id) == ids.end())
      ids.push_back(s.subject_id);
  return ids;
}

std::vector<const SequenceRef*> DatasetManifest::sequences_of(
    const std::string& subject_id) const {
  std::vector<const SequenceRef*> out;
  for (const auto& s : sequences)
    if (s.subject_id == subject_id) out.push_back(&s);
  return out;
}

fs::path sequence_dir(const fs::path& root, const std::string& subject_id,
                      const std::string& view) {
  return root / subject_id / view;
}

void save_sequence(const GaitSequence& seq, const fs::path& dir, int bitdepth) {
  seq.validate();
  fs::create_directories(dir);
  for (int i = 0; i < seq.size(); ++i) {
    save_frame_pam(seq.frames[i], dir / frame_name(i), bitdepth);
    if (seq.has_rgb()) save_image_ppm(seq.rgb_frames[i], dir / rgb_name(i));
  }
}

GaitSequence load_sequence(const fs::path& dir, const std::string& subject_id,
                           const std::string& view, double fps) {
  if (!fs::is_directory(dir))
    throw DataError("load_sequence: not a directory: " + dir.string());

  std::set<int> indices;
  bool any_rgb = false;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".pam")
      indices.insert(std::stoi(name.substr(6, 6)));
    if (name.rfind("rgb_", 0) == 0) any_rgb = true;
  }
  if (indices.empty())
    throw DataError("load_sequence: no frame files in " + dir.string());

  GaitSequence seq;
  seq.subject_id = subject_id;
  seq.view = view;
  seq.fps = fps;
  const int n = static_cast<int>(indices.size());
  for (int i = 0; i < n; ++i) {
    if (!indices.count(i))
      throw DataError("load_sequence: missing frame " + (dir / frame_name(i)).string() +
                      " (gap in numbering)");
    seq.frames.push_back(load_frame_pam(dir / frame_name(i)));
    if (seq.frames.back().height() != seq.frames.front().height() ||
        seq.frames.back().width() != seq.frames.front().width())
      throw DataError("load_sequence: dimension mismatch in " +
                      (dir / frame_name(i)).string());
    if (any_rgb) {
      const fs::path rp = dir / rgb_name(i);
      if (!fs::exists(rp))
        throw DataError("load_sequence: missing rgb frame " + rp.string());
      seq.rgb_frames.push_back(load_image_ppm(rp));
    }
  }
  return seq;
}

void write_manifest(const DatasetManifest& m) {
  json j;
  j["schema_version"] = 1;
  j["bitdepth"] = m.bitdepth;
  j["sequences"] = json::array();
  for (const auto& s : m.sequences) {
    j["sequences"].push_back({{"subject_id", s.subject_id},
                              {"view", s.view},
                              {"frame_count", s.frame_count},
                              {"fps", s.fps},
                              {"role", s.role},
                              {"has_rgb", s.has_rgb}});
  }
  fs::create_directories(m.root);
  std::ofstream out(m.root / "manifest", std::ios::trunc);
  if (!out) throw DataError("cannot write manifest under " + m.root.string());
  out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const fs::path& root) {
  std::ifstream in(root / "manifest");
  if (!in) throw DataError("no manifest in " + root.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed manifest in " + root.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.root = root;
  m.bitdepth = j.value("bitdepth", 8);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& s : j.at("sequences")) {
    SequenceRef r;
    r.subject_id = s.at("subject_id").get<std::string>();
    r.view = s.at("view").get<std::string>();
    r.frame_count = s.at("frame_count").get<int>();
    r.fps = s.value("fps", 20.0);
    r.role = s.value("role", "train");
    r.has_rgb = s.value("has_rgb", false);
    if (!seen.insert({r.subject_id, r.view}).second)
      throw DataError("manifest lists sequence twice: " + r.subject_id + "/" + r.view);
    m.sequences.push_back(std::move(r));
  }
  return m;
}

void save_dataset(const std::vector<GaitSequence>& seqs, const fs::path& root,
                  int bitdepth, const std::vector<std::string>& roles) {
  DatasetManifest m;
  m.root = root;
  m.bitdepth = bitdepth;
  for (size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = seqs[i];
    save_sequence(s, sequence_dir(root, s.subject_id, s.view), bitdepth);
    SequenceRef r;
    r.subject_id = s.subject_id;
    r.view = s.view;
    r.frame_count = s.size();
    r.fps = s.fps;
    r.role = i < roles.size() ? roles[i] : "train";
    r.has_rgb = s.has_rgb();
    m.sequences.push_back(std::move(r));
  }
  write_manifest(m);
}

GaitSequence load_dataset_sequence(const DatasetManifest& m, const SequenceRef& ref) {
  const fs::path dir = sequence_dir(m.root, ref.subject_id, ref.view);
  GaitSequence seq = load_sequence(dir, ref.subject_id, ref.view, ref.fps);
  if (seq.size() != ref.frame_count)
    throw DataError("frame count mismatch for " + ref.subject_id + "/" + ref.view +
                    ": manifest says " + std::to_string(ref.frame_count) + ", found " +
                    std::to_string(seq.size()));
  return seq;
}

std::vector<GaitSequence> load_dataset(const DatasetManifest& m) {
  std::vector<GaitSequence> out;
  out.reserve(m.sequences.size());
  for (const auto& ref : m.sequences) out.push_back(load_dataset_sequence(m, ref));
  return out;
}

std::string dataset_hash(const DatasetManifest& m) {
  std::ifstream in(m.root / "manifest");
  if (!in) throw DataError("dataset_hash: no manifest in " + m.root.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return hex64(fnv1a64(text));
}

}  // namespace ctrgan::gait
