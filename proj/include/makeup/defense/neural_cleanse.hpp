#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "makeup/attack/target_model.hpp"

namespace makeup {

struct ReversedTrigger {
  Tensor<real> mask;     // [H,W] in [0,1]
  Tensor<real> pattern;  // [3,H,W] in [0,1]
  double l1_norm = 0;
  double final_loss = 0;
  bool diverged = false;  // partial result if the optimization blew up
};

struct NeuralCleanseConfig {
  int epochs = 100;
  double lr = 0.005;
  double lambda_mask = 1e-3;
  int batch_size = 8;
  uint64_t seed = 7;
};

// Optimize mask m and pattern p (both sigmoid-parameterized) so that
// (1-m)*x + m*p classifies as `label` for clean x, plus lambda*||m||_1.
template <class T>
inline ReversedTrigger reverse_trigger(TargetModel<T>& model, int label, const Dataset& d_opt,
                                       const NeuralCleanseConfig& cfg = {}) {
  if (d_opt.samples.empty()) throw std::invalid_argument("reverse_trigger: empty dataset");
  int h = d_opt.samples[0].pixels.dim(1), w = d_opt.samples[0].pixels.dim(2);

  Param<T> mask_logit(Tensor<T>::full({h, w}, T(-3)));     // sigmoid(-3) ~ 0.047
  Param<T> pattern_logit(Tensor<T>::zeros({3, h, w}));     // sigmoid(0) = 0.5
  nn::ParamMap<T> params{{"mask", &mask_logit}, {"pattern", &pattern_logit}};
  nn::Adam<T> opt(T(cfg.lr));
  Rng rng(cfg.seed);

  ReversedTrigger out;
  int n = static_cast<int>(d_opt.samples.size());
  for (int e = 0; e < cfg.epochs; ++e) {
    std::vector<int> perm = rng.permutation(n);
    for (int start = 0; start < n; start += cfg.batch_size) {
      int bs = std::min(cfg.batch_size, n - start);
      Tape<T> t;
      auto m = t.sigmoid(t.leaf(mask_logit));
      auto p = t.sigmoid(t.leaf(pattern_logit));
      auto inv_m = t.add_const(t.neg(m), T(1));
      typename Tape<T>::Var loss{};
      bool first = true;
      for (int k = 0; k < bs; ++k) {
        const auto& s = d_opt.samples[static_cast<size_t>(perm[static_cast<size_t>(start + k)])];
        auto x = t.input(s.pixels.template cast<T>());
        auto blended = t.add(t.spatial_mul(x, inv_m), t.spatial_mul(p, m));
        auto ce = t.softmax_ce(model.forward_logits(t, blended), label);
        loss = first ? ce : t.add(loss, ce);
        first = false;
      }
      loss = t.scale(loss, T(1) / static_cast<T>(bs));
      loss = t.add(loss, t.scale(t.l1_norm(m), T(cfg.lambda_mask)));
      double lv = t.scalar(loss);
      if (!std::isfinite(lv)) {
        out.diverged = true;
        goto finish;
      }
      out.final_loss = lv;
      nn::zero_grads(params);
      t.backward(loss);
      opt.step(params);
    }
  }
finish:
  out.mask = Tensor<real>({h, w});
  for (int64_t i = 0; i < out.mask.numel(); ++i) {
    double v = 1.0 / (1.0 + std::exp(-static_cast<double>(mask_logit.value[i])));
    out.mask[i] = static_cast<real>(v);
    out.l1_norm += v;
  }
  out.pattern = Tensor<real>({3, h, w});
  for (int64_t i = 0; i < out.pattern.numel(); ++i)
    out.pattern[i] =
        static_cast<real>(1.0 / (1.0 + std::exp(-static_cast<double>(pattern_logit.value[i]))));
  return out;
}

struct NeuralCleanseReport {
  std::vector<ReversedTrigger> triggers;  // index = label
  std::vector<double> norms;
  std::vector<double> anomaly_index;      // MAD-based
  std::vector<int> flagged;               // labels with small norm and index > threshold
  double mad_threshold = 2.0;

  void write_csv(const std::string& path) const {
    std::ofstream f(path);
    f << "label,l1_norm,anomaly_index,flagged,diverged\n";
    for (size_t i = 0; i < norms.size(); ++i) {
      bool fl = std::find(flagged.begin(), flagged.end(), static_cast<int>(i)) != flagged.end();
      f << i << ',' << norms[i] << ',' << anomaly_index[i] << ',' << (fl ? 1 : 0) << ','
        << (triggers[i].diverged ? 1 : 0) << "\n";
    }
  }
};

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class T>
inline NeuralCleanseReport neural_cleanse(TargetModel<T>& model, const Dataset& d_opt,
                                          const NeuralCleanseConfig& cfg = {},
                                          double mad_threshold = 2.0) {
  NeuralCleanseReport rep;
  rep.mad_threshold = mad_threshold;
  for (int c = 0; c < model.num_classes; ++c) {
    rep.triggers.push_back(reverse_trigger(model, c, d_opt, cfg));
    rep.norms.push_back(rep.triggers.back().l1_norm);
  }
  double med = median_of(rep.norms);
  std::vector<double> dev;
  for (double v : rep.norms) dev.push_back(std::abs(v - med));
  double mad = 1.4826 * median_of(dev);
  for (size_t i = 0; i < rep.norms.size(); ++i) {
    double idx = mad > 0 ? std::abs(rep.norms[i] - med) / mad : 0.0;
    rep.anomaly_index.push_back(idx);
    if (rep.norms[i] < med && idx > mad_threshold) rep.flagged.push_back(static_cast<int>(i));
  }
  return rep;
}

}  // namespace makeup
