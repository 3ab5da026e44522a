#pragma once

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "makeup/core/nn.hpp"

namespace makeup {

// Checkpoint container: magic line, 8-byte LE header length, JSON header
// (architecture config + tensor directory), then raw tensor data in
// directory order. Self-describing and byte-stable for fixed inputs.
inline constexpr const char* kCkptMagic = "MKCKPT1\n";

template <class T>
inline void save_checkpoint(const std::string& path, const nn::ParamMap<T>& params,
                            const nlohmann::json& arch, int version) {
  nlohmann::json hdr;
  hdr["format_version"] = 1;
  hdr["bundle_version"] = version;
  hdr["scalar"] = sizeof(T) == 4 ? "f32" : "f64";
  hdr["arch"] = arch;
  nlohmann::json dir = nlohmann::json::array();
  for (auto& [name, p] : params) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = p->value.shape;
    dir.push_back(e);
  }
  hdr["tensors"] = dir;
  std::string hs = hdr.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(kCkptMagic, 8);
  uint64_t n = hs.size();
  f.write(reinterpret_cast<const char*>(&n), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (auto& [name, p] : params)
    f.write(reinterpret_cast<const char*>(p->value.data.data()),
            static_cast<std::streamsize>(p->value.data.size() * sizeof(T)));
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

inline nlohmann::json read_checkpoint_header(std::ifstream& f, const std::string& path) {
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  uint64_t n = 0;
  f.read(reinterpret_cast<char*>(&n), 8);
  std::string hs(n, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(n));
  if (!f) throw std::runtime_error("truncated checkpoint header: " + path);
  return nlohmann::json::parse(hs);
}

// Loads into an already constructed module whose named params match the
// directory. Returns the header for arch/version inspection.
template <class T>
inline nlohmann::json load_checkpoint(const std::string& path, const nn::ParamMap<T>& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  nlohmann::json hdr = read_checkpoint_header(f, path);
  std::string want = sizeof(T) == 4 ? "f32" : "f64";
  if (hdr.at("scalar").get<std::string>() != want)
    throw std::runtime_error("checkpoint scalar type mismatch: " + path);
  const auto& dir = hdr.at("tensors");
  if (dir.size() != params.size())
    throw std::runtime_error("checkpoint tensor count mismatch: " + path);
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& e = dir[i];
    if (e.at("name").get<std::string>() != params[i].first)
      throw std::runtime_error("checkpoint tensor name mismatch at " + params[i].first);
    std::vector<int> shape = e.at("shape").get<std::vector<int>>();
    Param<T>& p = *params[i].second;
    if (shape != p.value.shape)
      throw std::runtime_error("checkpoint shape mismatch at " + params[i].first);
    f.read(reinterpret_cast<char*>(p.value.data.data()),
           static_cast<std::streamsize>(p.value.data.size() * sizeof(T)));
  }
  if (!f) throw std::runtime_error("truncated checkpoint data: " + path);
  return hdr;
}

inline nlohmann::json peek_checkpoint_header(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  return read_checkpoint_header(f, path);
}

}  // namespace makeup
