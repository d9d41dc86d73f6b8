#pragma once

#include <cstring>
#include <fstream>

#include "ctrgan/hashing.hpp"
#include "ctrgan/model.hpp"

namespace ctrgan::model {

// Checkpoint archive: magic, schema version, JSON header (model config,
// key-set references, arbitrary run metadata, tensor table), then raw
// float32 tensor data in table order.
inline constexpr char kCheckpointMagic[8] = {'C', 'T', 'R', 'G', 'A', 'N', 'C', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

template <typename S>
void save_checkpoint(const CtrGanModel<S>& m, const std::filesystem::path& path,
                     const json& metadata = json::object()) {
  json header;
  header["schema_version"] = kCheckpointVersion;
  header["model_config"] = m.cfg.to_json();
  header["init_seed"] = m.init_seed;
  header["metadata"] = metadata;
  header["g_st_subject"] = m.g_st.expected_subject;
  header["g_ts_subject"] = m.g_ts.expected_subject;
  json table = json::array();
  uint64_t offset = 0;
  for (const auto& [name, v] : m.params.entries) {
    const auto& t = m.tape.value(v);
    table.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += static_cast<uint64_t>(t.numel()) * sizeof(float);
  }
  header["tensors"] = std::move(table);
  const std::string htext = header.dump();

  std::filesystem::create_directories(path.parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, 8);
  const uint32_t ver = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&ver), 4);
  const uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& [name, v] : m.params.entries) {
    const auto& t = m.tape.value(v);
    for (Eigen::Index i = 0; i < t.numel(); ++i) {
      const float f = static_cast<float>(t[i]);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
  if (!out) throw DataError("checkpoint write failed: " + path.string());
}

struct CheckpointInfo {
  ModelConfig cfg;
  json metadata;
  uint64_t init_seed = 0;
  std::string g_st_subject, g_ts_subject;
  std::string content_id;  // hash of the file bytes
};

inline json read_checkpoint_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw DataError("not a checkpoint file: " + path.string());
  uint32_t ver = 0;
  in.read(reinterpret_cast<char*>(&ver), 4);
  if (ver != kCheckpointVersion)
    throw DataError("unsupported checkpoint version in " + path.string());
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw DataError("truncated checkpoint header: " + path.string());
  return json::parse(htext);
}

inline CheckpointInfo peek_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  const json header = read_checkpoint_header(in, path);
  CheckpointInfo info;
  info.cfg = ModelConfig::from_json(header.at("model_config"));
  info.metadata = header.value("metadata", json::object());
  info.init_seed = header.value("init_seed", 0ull);
  info.g_st_subject = header.value("g_st_subject", "");
  info.g_ts_subject = header.value("g_ts_subject", "");

  std::ifstream whole(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(whole)),
                    std::istreambuf_iterator<char>());
  info.content_id = hex64(fnv1a64(bytes));
  return info;
}

template <typename S>
std::unique_ptr<CtrGanModel<S>> load_checkpoint(const std::filesystem::path& path,
                                                CheckpointInfo* info_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  const json header = read_checkpoint_header(in, path);

  const ModelConfig cfg = ModelConfig::from_json(header.at("model_config"));
  auto m = make_model<S>(cfg, header.value("init_seed", 0ull));
  m->g_st.expected_subject = header.value("g_st_subject", "");
  m->g_ts.expected_subject = header.value("g_ts_subject", "");

  const auto& table = header.at("tensors");
  if (table.size() != m->params.entries.size())
    throw DataError("checkpoint tensor table does not match the architecture");
  for (size_t i = 0; i < m->params.entries.size(); ++i) {
    const auto& [name, v] = m->params.entries[i];
    if (table.at(i).at("name").get<std::string>() != name)
      throw DataError("checkpoint tensor order mismatch at '" + name + "'");
    auto& t = m->tape.value_mut(v);
    const auto shape = table.at(i).at("shape").get<std::vector<int>>();
    if (shape != t.shape())
      throw DataError("checkpoint tensor shape mismatch at '" + name + "'");
    for (Eigen::Index k = 0; k < t.numel(); ++k) {
      float f = 0;
      in.read(reinterpret_cast<char*>(&f), 4);
      t[k] = static_cast<S>(f);
    }
  }
  if (!in) throw DataError("truncated checkpoint data: " + path.string());

  if (info_out) *info_out = peek_checkpoint(path);
  return m;
}

}  // namespace ctrgan::model
