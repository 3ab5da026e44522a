#pragma once

#include <fstream>
#include <json.hpp>
#include <string>

#include "makeup/data/dataset.hpp"

namespace makeup {

// Manifest file schema (JSON):
// {
//   "target_label": int,
//   "poisoning_rate": double,
//   "entries": [ { "sample_id": str, "reference_id": str,
//                  "generator_version": int, "original_label": int,
//                  "content_hash": sha256-hex } ]
// }

inline nlohmann::json manifest_to_json(const PoisonManifest& m) {
  nlohmann::json j;
  j["target_label"] = m.target_label;
  j["poisoning_rate"] = m.poisoning_rate;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json je;
    je["sample_id"] = e.sample_id;
    je["reference_id"] = e.reference_id;
    je["generator_version"] = e.generator_version;
    je["original_label"] = e.original_label;
    je["content_hash"] = e.content_hash;
    entries.push_back(je);
  }
  j["entries"] = entries;
  return j;
}

inline PoisonManifest manifest_from_json(const nlohmann::json& j) {
  PoisonManifest m;
  m.target_label = j.at("target_label").get<int>();
  m.poisoning_rate = j.at("poisoning_rate").get<double>();
  for (const auto& je : j.at("entries")) {
    PoisonEntry e;
    e.sample_id = je.at("sample_id").get<std::string>();
    e.reference_id = je.at("reference_id").get<std::string>();
    e.generator_version = je.at("generator_version").get<int>();
    e.original_label = je.at("original_label").get<int>();
    e.content_hash = je.at("content_hash").get<std::string>();
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline void save_manifest(const PoisonManifest& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write manifest: " + path);
  f << manifest_to_json(m).dump(2) << "\n";
}

inline PoisonManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest: " + path);
  return manifest_from_json(nlohmann::json::parse(f));
}

}  // namespace makeup
