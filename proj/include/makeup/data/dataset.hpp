#pragma once

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "makeup/core/image_io.hpp"
#include "makeup/core/tensor.hpp"

namespace makeup {

struct Provenance {
  bool poisoned = false;
  std::string reference_id;
  int generator_version = 0;
};

struct ImageSample {
  Image pixels;  // [3,H,W] in [0,1]
  int label = 0;
  std::string sample_id;
  Provenance provenance;
};

enum class DatasetRole { GeneratorTraining, Clean, Poisoned };

struct PoisonEntry {
  std::string sample_id;
  std::string reference_id;
  int generator_version = 0;
  int original_label = 0;
  std::string content_hash;  // sha256 of the 8-bit quantized poisoned pixels
};

struct PoisonManifest {
  int target_label = 0;
  double poisoning_rate = 0.0;
  std::vector<PoisonEntry> entries;

  const PoisonEntry* find(const std::string& sample_id) const {
    for (const auto& e : entries)
      if (e.sample_id == sample_id) return &e;
    return nullptr;
  }
};

struct Dataset {
  std::vector<ImageSample> samples;
  int num_classes = 0;
  DatasetRole role = DatasetRole::Clean;
  std::vector<std::string> class_names;  // index -> identity directory name

  const ImageSample* find(const std::string& sample_id) const {
    for (const auto& s : samples)
      if (s.sample_id == sample_id) return &s;
    return nullptr;
  }
  ImageSample* find_mut(const std::string& sample_id) {
    for (auto& s : samples)
      if (s.sample_id == sample_id) return &s;
    return nullptr;
  }
};

// Banker's rounding; the poisoned-subset size |D_m| = rhe(gamma * N).
inline int round_half_even(double x) {
  double r = std::nearbyint(x);  // FE_TONEAREST rounds half to even
  return static_cast<int>(r);
}

// Directory-per-identity layout: root/<identity>/<image>.png|jpg.
// Labels follow lexicographic directory order. `.mask.png` companions are
// skipped here; face_prep consumes them.
inline Dataset load_dataset(const std::string& root, int resolution,
                            DatasetRole role = DatasetRole::Clean) {
  namespace fs = std::filesystem;
  if (resolution <= 0) throw std::invalid_argument("resolution must be positive");
  if (!fs::is_directory(root)) throw std::runtime_error("dataset root missing: " + root);

  std::vector<std::string> classes;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) classes.push_back(e.path().filename().string());
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw std::runtime_error("dataset root has no identity directories: " + root);

  Dataset d;
  d.role = role;
  d.num_classes = static_cast<int>(classes.size());
  d.class_names = classes;
  for (int label = 0; label < d.num_classes; ++label) {
    fs::path cdir = fs::path(root) / classes[static_cast<size_t>(label)];
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(cdir)) {
      if (!e.is_regular_file()) continue;
      std::string name = e.path().filename().string();
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      if (name.size() > 9 && name.substr(name.size() - 9) == ".mask.png") continue;
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(name);
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw std::runtime_error("empty identity directory: " + cdir.string());
    for (const auto& f : files) {
      ImageSample s;
      s.pixels = load_image((cdir / f).string(), resolution);
      s.label = label;
      s.sample_id = classes[static_cast<size_t>(label)] + "/" + f;
      d.samples.push_back(std::move(s));
    }
  }
  return d;
}

// Writes samples back out as PNG under root/<identity>/. 8-bit
// quantization happens only here.
inline void save_dataset(const Dataset& d, const std::string& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  for (const auto& s : d.samples) {
    fs::path p = fs::path(root) / s.sample_id;
    fs::create_directories(p.parent_path());
    save_image(p.string(), s.pixels);
  }
}

// Uniform (optionally per-identity stratified) split into the poison
// candidate subset D_b and the untouched rest.
inline std::pair<std::vector<std::string>, std::vector<std::string>> split_poison_candidates(
    const Dataset& d, double gamma, uint64_t seed, bool stratified = false) {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("gamma must be in [0,1]");
  int n = static_cast<int>(d.samples.size());
  int k = round_half_even(gamma * n);
  Rng rng(seed);

  std::vector<int> chosen;
  if (!stratified) {
    std::vector<int> perm = rng.permutation(n);
    chosen.assign(perm.begin(), perm.begin() + k);
  } else {
    // Largest-remainder quotas per class, then uniform within class.
    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < n; ++i) by_class[d.samples[static_cast<size_t>(i)].label].push_back(i);
    std::vector<std::pair<double, int>> rem;  // fractional part, class
    std::map<int, int> quota;
    int assigned = 0;
    for (auto& [c, idxs] : by_class) {
      double exact = gamma * static_cast<double>(idxs.size());
      int q = static_cast<int>(std::floor(exact));
      quota[c] = q;
      assigned += q;
      rem.push_back({exact - q, c});
    }
    std::sort(rem.begin(), rem.end(), [](auto& a, auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (size_t i = 0; assigned < k && i < rem.size(); ++i, ++assigned) ++quota[rem[i].second];
    for (auto& [c, idxs] : by_class) {
      std::vector<int> perm = rng.permutation(static_cast<int>(idxs.size()));
      for (int j = 0; j < quota[c] && j < static_cast<int>(idxs.size()); ++j)
        chosen.push_back(idxs[static_cast<size_t>(perm[static_cast<size_t>(j)])]);
    }
    if (static_cast<int>(chosen.size()) > k) chosen.resize(static_cast<size_t>(k));
  }

  std::set<int> in_b(chosen.begin(), chosen.end());
  std::vector<std::string> db, rest;
  for (int i = 0; i < n; ++i) {
    const std::string& id = d.samples[static_cast<size_t>(i)].sample_id;
    if (in_b.count(i))
      db.push_back(id);
    else
      rest.push_back(id);
  }
  return {db, rest};
}

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> failures;

  void fail(std::string msg) {
    ok = false;
    failures.push_back(std::move(msg));
  }
};

// Checks manifest soundness of a poisoned dataset against its clean
// originals: benign samples bit-identical, poisoned labels equal the
// target, hashes match, entry count consistent with the rate.
inline ValidationReport validate_manifest(const Dataset& d, const PoisonManifest& m,
                                          const Dataset& originals) {
  ValidationReport rep;
  if (d.samples.size() != originals.samples.size())
    throw std::runtime_error("validate_manifest: dataset/original size mismatch");

  int expected = round_half_even(m.poisoning_rate * static_cast<double>(d.samples.size()));
  if (static_cast<int>(m.entries.size()) != expected)
    rep.fail("entry count " + std::to_string(m.entries.size()) + " != round(rate*N) = " +
             std::to_string(expected));

  for (const auto& s : d.samples) {
    const ImageSample* orig = originals.find(s.sample_id);
    if (!orig) {
      rep.fail("sample_id missing from originals: " + s.sample_id);
      throw std::runtime_error("validate_manifest: structural sample_id mismatch: " + s.sample_id);
    }
    const PoisonEntry* e = m.find(s.sample_id);
    if (e) {
      if (s.label != m.target_label)
        rep.fail("poisoned sample not labeled target: " + s.sample_id);
      if (e->original_label != orig->label)
        rep.fail("manifest original_label wrong for " + s.sample_id);
      if (!s.provenance.poisoned)
        rep.fail("manifest entry for non-poisoned sample: " + s.sample_id);
      if (!e->content_hash.empty() && image_content_hash(s.pixels) != e->content_hash)
        rep.fail("content hash mismatch for " + s.sample_id);
    } else {
      if (s.pixels.data != orig->pixels.data)
        rep.fail("benign sample differs from original: " + s.sample_id);
      if (s.label != orig->label)
        rep.fail("benign label changed: " + s.sample_id);
    }
  }
  return rep;
}

}  // namespace makeup
