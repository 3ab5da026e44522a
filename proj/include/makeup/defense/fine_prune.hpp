#pragma once

#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "makeup/attack/trainer.hpp"

namespace makeup {

struct PruneStep {
  int channel = -1;  // -1 = unpruned baseline
  double ba = 0, asr = 0;
};

template <class T>
struct FinePruneResult {
  TargetModel<T> model;  // masked snapshot honoring the budget
  std::vector<PruneStep> curve;
  std::vector<int> pruned_channels;

  void write_curve(const std::string& path) const {
    std::ofstream f(path);
    f << "step,channel,ba,asr\n";
    for (size_t i = 0; i < curve.size(); ++i)
      f << i << ',' << curve[i].channel << ',' << curve[i].ba << ',' << curve[i].asr << "\n";
  }
};

// Mean activation per channel of `layer` over the clean validation set.
template <class T>
inline std::vector<double> channel_mean_activations(TargetModel<T>& model, const Dataset& val,
                                                    const std::string& layer) {
  bool known = false;
  for (auto& [name, c] : model.conv_names()) known |= name == layer;
  if (!known) throw std::invalid_argument("fine_prune: unknown layer " + layer);
  if (val.samples.empty()) throw std::invalid_argument("fine_prune: empty validation set");

  std::vector<double> mean;
  for (const auto& s : val.samples) {
    Tape<T> t;
    typename TargetModel<T>::Record rec;
    model.forward_features(t, t.input(s.pixels.template cast<T>()), &rec);
    for (auto& [name, v] : rec) {
      if (name != layer) continue;
      const auto& fv = t.val(v);
      int c = fv.dim(0);
      int64_t hw = static_cast<int64_t>(fv.dim(1)) * fv.dim(2);
      if (mean.empty()) mean.assign(static_cast<size_t>(c), 0.0);
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int64_t i = 0; i < hw; ++i)
          acc += static_cast<double>(fv.data[static_cast<size_t>(ch) * hw + i]);
        mean[static_cast<size_t>(ch)] += acc / static_cast<double>(hw);
      }
    }
  }
  for (auto& v : mean) v /= static_cast<double>(val.samples.size());
  return mean;
}

// Prune channels of `layer` in ascending mean-activation order until the
// next prune would push BA more than ba_budget points below baseline.
// asr_fn may be empty (curve then records ASR 0).
template <class T>
inline FinePruneResult<T> fine_prune(const TargetModel<T>& model_in, const Dataset& clean_val,
                                     const std::string& layer, double ba_budget,
                                     const Dataset& ba_eval,
                                     const std::function<double(TargetModel<T>&)>& asr_fn = {}) {
  FinePruneResult<T> out{model_in, {}, {}};
  TargetModel<T>& model = out.model;
  std::vector<double> acts = channel_mean_activations(model, clean_val, layer);
  std::vector<int> order(acts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return acts[static_cast<size_t>(a)] < acts[static_cast<size_t>(b)]; });

  auto ba_of = [&](TargetModel<T>& m) { return 100.0 * accuracy(m, ba_eval, nullptr); };
  double base_ba = ba_of(model);
  out.curve.push_back({-1, base_ba, asr_fn ? asr_fn(model) : 0.0});

  Tensor<T>& mask = model.channel_masks.at(layer);
  for (int ch : order) {
    mask[ch] = T(0);
    double ba = ba_of(model);
    if (base_ba - ba > ba_budget) {
      mask[ch] = T(1);  // roll back the prune that broke the budget
      break;
    }
    out.pruned_channels.push_back(ch);
    out.curve.push_back({ch, ba, asr_fn ? asr_fn(model) : 0.0});
  }
  return out;
}

}  // namespace makeup
