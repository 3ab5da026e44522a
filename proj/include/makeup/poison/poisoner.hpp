#pragma once

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "makeup/data/dataset.hpp"
#include "makeup/faceprep/regions.hpp"
#include "makeup/gan/models.hpp"
#include "makeup/poison/nmi.hpp"
#include "makeup/poison/ssim.hpp"

namespace makeup {

struct ReferenceSet {
  std::vector<ImageSample> references;
  std::vector<RegionMaskSet> masks;     // parallel to references (may be empty)
  std::vector<int64_t> usage_counts;    // parallel to references

  void validate() const {
    if (references.empty()) throw std::invalid_argument("reference set must be nonempty");
  }
  size_t size() const { return references.size(); }
};

enum class SelectionMode { Nmi, Ssim, Rand };

// Alg. 1 selection: argmax similarity over the reference set, ties to the
// lowest index. RAND draws uniformly from the supplied rng (ablation).
inline int select_reference_index(const Image& s, ReferenceSet& refs, const NmiConfig& cfg,
                                  SelectionMode mode = SelectionMode::Nmi, Rng* rng = nullptr) {
  refs.validate();
  int best = 0;
  if (mode == SelectionMode::Rand) {
    if (!rng) throw std::invalid_argument("RAND selection needs an rng");
    best = static_cast<int>(rng->randint(static_cast<int64_t>(refs.size())));
  } else {
    double best_score = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < refs.size(); ++i) {
      double score = mode == SelectionMode::Nmi
                         ? normalized_mutual_information(s, refs.references[i].pixels, cfg)
                         : ssim(s, refs.references[i].pixels);
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(i);
      }
    }
  }
  ++refs.usage_counts[static_cast<size_t>(best)];
  return best;
}

inline std::string select_reference(const Image& s, ReferenceSet& refs, const NmiConfig& cfg,
                                    SelectionMode mode = SelectionMode::Nmi,
                                    Rng* rng = nullptr) {
  return refs.references[static_cast<size_t>(select_reference_index(s, refs, cfg, mode, rng))]
      .sample_id;
}

// Alg. 1: sample D_b, transfer each selected sample with its chosen
// reference, relabel to the target (all-to-one), record every
// substitution. Benign samples are untouched.
template <class T>
inline std::pair<Dataset, PoisonManifest> poison_dataset(
    const Dataset& clean, ReferenceSet& refs, GeneratorBundle<T>& gen, double gamma,
    int target_label, uint64_t seed, const NmiConfig& cfg,
    SelectionMode mode = SelectionMode::Nmi, bool stratified = false) {
  if (gen.version < 1) throw std::invalid_argument("generator must be pretrained (version >= 1)");
  refs.validate();

  auto [db, rest] = split_poison_candidates(clean, gamma, seed, stratified);
  std::set<std::string> in_b(db.begin(), db.end());

  Dataset out = clean;
  out.role = DatasetRole::Poisoned;
  PoisonManifest m;
  m.target_label = target_label;
  m.poisoning_rate = gamma;

  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);  // independent stream for RAND mode
  for (auto& s : out.samples) {
    if (!in_b.count(s.sample_id)) continue;
    try {
      int ri = select_reference_index(s.pixels, refs, cfg, mode, &rng);
      const ImageSample& ref = refs.references[static_cast<size_t>(ri)];
      Tensor<T> poisoned =
          gen.transfer(s.pixels.template cast<T>(), ref.pixels.template cast<T>());
      PoisonEntry e;
      e.sample_id = s.sample_id;
      e.reference_id = ref.sample_id;
      e.generator_version = gen.version;
      e.original_label = s.label;
      s.pixels = poisoned.template cast<real>();
      s.label = target_label;
      s.provenance = {true, ref.sample_id, gen.version};
      e.content_hash = image_content_hash(s.pixels);
      m.entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw std::runtime_error("poisoning failed for sample " + s.sample_id + ": " + ex.what());
    }
  }
  return {std::move(out), std::move(m)};
}

// Alg. 2 line 7: regenerate exactly the manifest's samples from their
// clean originals with the newer generator; references re-selected.
template <class T>
inline std::pair<Dataset, PoisonManifest> update_poisoned_dataset(
    const Dataset& poisoned, const PoisonManifest& m, const Dataset& clean, ReferenceSet& refs,
    GeneratorBundle<T>& gen_new, const NmiConfig& cfg,
    SelectionMode mode = SelectionMode::Nmi, uint64_t rand_seed = 0) {
  for (const auto& e : m.entries)
    if (gen_new.version < e.generator_version)
      throw std::invalid_argument("update requires a generator at least as new as the manifest");

  Dataset out = poisoned;
  PoisonManifest m2;
  m2.target_label = m.target_label;
  m2.poisoning_rate = m.poisoning_rate;

  Rng rng(rand_seed ^ 0x9e3779b97f4a7c15ull);
  for (const auto& e : m.entries) {
    const ImageSample* orig = clean.find(e.sample_id);
    if (!orig)
      throw std::runtime_error("update: clean original missing for " + e.sample_id);
    ImageSample* dst = out.find_mut(e.sample_id);
    if (!dst) throw std::runtime_error("update: poisoned sample missing for " + e.sample_id);
    int ri = select_reference_index(orig->pixels, refs, cfg, mode, &rng);
    const ImageSample& ref = refs.references[static_cast<size_t>(ri)];
    Tensor<T> px = gen_new.transfer(orig->pixels.template cast<T>(), ref.pixels.template cast<T>());
    dst->pixels = px.template cast<real>();
    dst->label = m.target_label;
    dst->provenance = {true, ref.sample_id, gen_new.version};
    PoisonEntry e2 = e;
    e2.reference_id = ref.sample_id;
    e2.generator_version = gen_new.version;
    e2.content_hash = image_content_hash(dst->pixels);
    m2.entries.push_back(std::move(e2));
  }
  return {std::move(out), std::move(m2)};
}

// Test-time policy: the most frequently used training reference.
inline int inference_reference_index(const ReferenceSet& refs) {
  refs.validate();
  int64_t total = 0;
  for (auto c : refs.usage_counts) total += c;
  if (total == 0)
    throw std::runtime_error("inference reference requested before any poisoning ran");
  int best = 0;
  for (size_t i = 1; i < refs.usage_counts.size(); ++i)
    if (refs.usage_counts[i] > refs.usage_counts[static_cast<size_t>(best)])
      best = static_cast<int>(i);
  return best;
}

inline void write_usage_histogram(const ReferenceSet& refs, const std::string& path) {
  std::ofstream f(path);
  f << "reference_id,usage_count\n";
  for (size_t i = 0; i < refs.size(); ++i)
    f << refs.references[i].sample_id << ',' << refs.usage_counts[i] << "\n";
}

}  // namespace makeup
