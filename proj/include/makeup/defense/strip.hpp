#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "makeup/attack/target_model.hpp"
#include "makeup/data/dataset.hpp"

namespace makeup {

inline double shannon_entropy(const std::vector<double>& p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

// Mean prediction entropy of x over n random 0.5/0.5 pixel blends with
// auxiliary clean samples.
template <class T>
inline double strip_entropy(TargetModel<T>& model, const Image& x, const Dataset& aux, int n,
                            Rng& rng) {
  if (n < 1) throw std::invalid_argument("strip_entropy: n must be >= 1");
  if (aux.samples.empty()) throw std::invalid_argument("strip_entropy: aux set empty");
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const Image& a =
        aux.samples[static_cast<size_t>(rng.randint(static_cast<int64_t>(aux.samples.size())))]
            .pixels;
    if (!a.same_shape(x)) throw std::invalid_argument("strip_entropy: shape mismatch");
    Image blend = x;
    for (size_t j = 0; j < blend.data.size(); ++j)
      blend.data[j] = real(0.5) * (blend.data[j] + a.data[j]);
    sum += shannon_entropy(model.predict_probs(blend.template cast<T>()));
  }
  return sum / n;
}

struct StripRecord {
  std::string sample_id;
  bool poisoned = false;
  double entropy = 0;
};

struct StripReport {
  std::vector<StripRecord> records;
  // Best detection rate achievable at FPR < fpr_cap, sweeping thresholds
  // over the clean-entropy distribution (poisoned = low entropy).
  double best_detection_at_fpr(double fpr_cap) const {
    std::vector<double> clean, pois;
    for (const auto& r : records) (r.poisoned ? pois : clean).push_back(r.entropy);
    if (clean.empty() || pois.empty()) return 0;
    std::vector<double> thr = clean;
    thr.insert(thr.end(), pois.begin(), pois.end());
    std::sort(thr.begin(), thr.end());
    double best = 0;
    for (double t : thr) {
      double fp = 0, tp = 0;
      for (double v : clean)
        if (v <= t) ++fp;
      for (double v : pois)
        if (v <= t) ++tp;
      if (fp / clean.size() < fpr_cap) best = std::max(best, tp / pois.size());
    }
    return best;
  }
  void write_csv(const std::string& path) const {
    std::ofstream f(path);
    f << "sample_id,poisoned,entropy\n";
    for (const auto& r : records)
      f << r.sample_id << ',' << (r.poisoned ? 1 : 0) << ',' << r.entropy << "\n";
  }
};

template <class T>
inline StripReport strip_report(TargetModel<T>& model, const Dataset& clean_test,
                                const Dataset& poisoned_test, const Dataset& aux, int n,
                                uint64_t seed) {
  StripReport rep;
  Rng rng(seed);
  for (const auto& s : clean_test.samples)
    rep.records.push_back({s.sample_id, false, strip_entropy(model, s.pixels, aux, n, rng)});
  for (const auto& s : poisoned_test.samples)
    rep.records.push_back({s.sample_id, true, strip_entropy(model, s.pixels, aux, n, rng)});
  return rep;
}

}  // namespace makeup
