#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "makeup/attack/target_model.hpp"
#include "makeup/data/dataset.hpp"
#include "makeup/poison/poisoner.hpp"

namespace makeup {

struct TrainSchedule {
  int total_epochs = 60;
  std::vector<int> interception_epochs;  // sorted, each in (0, total_epochs)
  double lr = 0.01;
  double lr_decay_factor = 0.1;
  int lr_decay_period = 50;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 16;
  bool augment = true;

  void validate() const {
    if (total_epochs <= 0) throw std::invalid_argument("total_epochs must be positive");
    for (size_t i = 0; i < interception_epochs.size(); ++i) {
      int l = interception_epochs[i];
      if (l <= 0 || l >= total_epochs)
        throw std::invalid_argument("interception epoch out of (0, E)");
      if (i && interception_epochs[i - 1] >= l)
        throw std::invalid_argument("interception epochs must be strictly increasing");
    }
    if (lr_decay_period <= 0) throw std::invalid_argument("lr decay period must be positive");
  }

  double lr_at(int epoch) const {  // epoch is 1-based
    int steps = (epoch - 1) / lr_decay_period;
    return lr * std::pow(lr_decay_factor, steps);
  }
};

struct TrainEpochLog {
  int epoch = 0;
  double loss = 0, train_acc = 0, val_acc = 0, lr = 0;
};

template <class T>
struct BestCheckpoint {
  std::vector<Tensor<T>> values;
  double val_acc = -1.0;
  int epoch = 0;
};

template <class T>
inline void snapshot_params(const nn::ParamMap<T>& params, std::vector<Tensor<T>>& out) {
  out.clear();
  for (auto& [name, p] : params) out.push_back(p->value);
}

template <class T>
inline void restore_params(const nn::ParamMap<T>& params, const std::vector<Tensor<T>>& vals) {
  for (size_t i = 0; i < params.size(); ++i) params[i].second->value = vals[i];
}

// ---- augmentation (data-level, deterministic under rng) ----

template <class T>
inline Tensor<T> hflip(const Tensor<T>& img) {
  Tensor<T> out = img;
  int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(ch, y, x) = img.at(ch, y, w - 1 - x);
  return out;
}

// Zero-pad by `pad` then crop back at a random offset.
template <class T>
inline Tensor<T> random_crop(const Tensor<T>& img, int pad, Rng& rng) {
  int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  int oy = static_cast<int>(rng.randint(2 * pad + 1)) - pad;
  int ox = static_cast<int>(rng.randint(2 * pad + 1)) - pad;
  Tensor<T> out({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int sy = y + oy, sx = x + ox;
        out.at(ch, y, x) =
            (sy >= 0 && sy < h && sx >= 0 && sx < w) ? img.at(ch, sy, sx) : T(0);
      }
  return out;
}

// Stratified 10% validation split, fixed by seed; returns (train, val)
// index lists into d.samples.
inline std::pair<std::vector<int>, std::vector<int>> stratified_val_split(const Dataset& d,
                                                                          double val_frac,
                                                                          uint64_t seed) {
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < static_cast<int>(d.samples.size()); ++i)
    by_class[d.samples[static_cast<size_t>(i)].label].push_back(i);
  Rng rng(seed);
  std::vector<int> train, val;
  for (auto& [c, idxs] : by_class) {
    std::vector<int> perm = rng.permutation(static_cast<int>(idxs.size()));
    int nv = static_cast<int>(std::floor(val_frac * static_cast<double>(idxs.size())));
    for (int j = 0; j < static_cast<int>(idxs.size()); ++j) {
      int idx = idxs[static_cast<size_t>(perm[static_cast<size_t>(j)])];
      (j < nv ? val : train).push_back(idx);
    }
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {train, val};
}

template <class T>
inline double accuracy(TargetModel<T>& model, const Dataset& d, const std::vector<int>* subset) {
  int correct = 0, total = 0;
  auto eval = [&](const ImageSample& s) {
    if (model.predict(s.pixels.template cast<T>()) == s.label) ++correct;
    ++total;
  };
  if (subset)
    for (int i : *subset) eval(d.samples[static_cast<size_t>(i)]);
  else
    for (const auto& s : d.samples) eval(s);
  return total ? static_cast<double>(correct) / total : 0.0;
}

struct TrainDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Cross-entropy training over the poisoned dataset with step-decayed
// momentum SGD, flip/crop augmentation, best checkpoint tracked on the
// benign validation subset of `val_source` (clean images).
template <class T>
inline std::vector<TrainEpochLog> train_target(
    TargetModel<T>& model, const Dataset& d_p, const TrainSchedule& sched, uint64_t seed,
    const Dataset& val_source, const std::vector<int>& val_idx, BestCheckpoint<T>& best,
    int epoch_offset = 0, int epochs_to_run = -1, nn::Sgd<T>* opt_io = nullptr,
    const std::string& curve_csv = "") {
  sched.validate();
  auto params = model.params_all();
  nn::Sgd<T> local_opt(T(sched.lr), T(sched.momentum), T(sched.weight_decay));
  nn::Sgd<T>& opt = opt_io ? *opt_io : local_opt;
  Rng rng(seed + static_cast<uint64_t>(epoch_offset) * 0x51ul);

  int n = static_cast<int>(d_p.samples.size());
  if (epochs_to_run < 0) epochs_to_run = sched.total_epochs - epoch_offset;
  std::vector<TrainEpochLog> logs;

  for (int e = 1; e <= epochs_to_run; ++e) {
    int epoch = epoch_offset + e;
    opt.lr = T(sched.lr_at(epoch));
    std::vector<int> perm = rng.permutation(n);
    double loss_sum = 0;
    int correct = 0;

    for (int start = 0; start < n; start += sched.batch_size) {
      int bs = std::min(sched.batch_size, n - start);
      Tape<T> t;
      typename Tape<T>::Var batch_loss{};
      bool first = true;
      for (int k = 0; k < bs; ++k) {
        const ImageSample& s = d_p.samples[static_cast<size_t>(perm[static_cast<size_t>(start + k)])];
        Tensor<T> img = s.pixels.template cast<T>();
        if (sched.augment) {
          if (rng.uniform() < 0.5) img = hflip(img);
          img = random_crop(img, 4, rng);
        }
        auto logits = model.forward_logits(t, t.input(std::move(img)));
        const auto& lv = t.val(logits);
        int argmax = 0;
        for (int i = 1; i < static_cast<int>(lv.numel()); ++i)
          if (lv[i] > lv[argmax]) argmax = i;
        if (argmax == s.label) ++correct;
        auto ls = t.softmax_ce(logits, s.label);
        batch_loss = first ? ls : t.add(batch_loss, ls);
        first = false;
      }
      batch_loss = t.scale(batch_loss, T(1) / static_cast<T>(bs));
      double lv = t.scalar(batch_loss);
      if (!std::isfinite(lv))
        throw TrainDivergence("non-finite training loss at epoch " + std::to_string(epoch));
      loss_sum += lv * bs;
      nn::zero_grads(params);
      t.backward(batch_loss);
      opt.step(params);
    }

    TrainEpochLog log;
    log.epoch = epoch;
    log.loss = loss_sum / n;
    log.train_acc = static_cast<double>(correct) / n;
    log.val_acc = val_idx.empty() ? 0.0 : accuracy(model, val_source, &val_idx);
    log.lr = sched.lr_at(epoch);
    logs.push_back(log);

    if (log.val_acc >= best.val_acc) {
      best.val_acc = log.val_acc;
      best.epoch = epoch;
      snapshot_params(params, best.values);
    }
  }

  if (!curve_csv.empty()) {
    bool fresh = !std::filesystem::exists(curve_csv) || epoch_offset == 0;
    std::ofstream f(curve_csv, fresh ? std::ios::trunc : std::ios::app);
    if (fresh) f << "epoch,loss,train_acc,val_acc,lr\n";
    for (const auto& l : logs)
      f << l.epoch << ',' << l.loss << ',' << l.train_acc << ',' << l.val_acc << ',' << l.lr
        << "\n";
  }
  return logs;
}

struct PredictionLog {
  std::string sample_id;
  int true_label = 0, predicted = 0;
  bool triggered = false;
};

struct AttackReport {
  double asr = 0, ba = 0;  // percentages
  std::vector<PredictionLog> predictions;
  std::string inference_reference_id;
  nlohmann::json config;
};

// BA on the clean test set; ASR over non-target-class samples triggered
// with the inference-time reference.
template <class T>
inline AttackReport evaluate_asr_ba(TargetModel<T>& model, const Dataset& d_test_clean,
                                    GeneratorBundle<T>& gen, const ReferenceSet& refs,
                                    int target_label) {
  if (d_test_clean.samples.empty())
    throw std::invalid_argument("evaluate_asr_ba: empty test set");
  AttackReport rep;
  int ref_idx = inference_reference_index(refs);
  const Image& ref_img = refs.references[static_cast<size_t>(ref_idx)].pixels;
  rep.inference_reference_id = refs.references[static_cast<size_t>(ref_idx)].sample_id;

  int clean_correct = 0;
  int attack_hits = 0, attack_total = 0;
  for (const auto& s : d_test_clean.samples) {
    int pred = model.predict(s.pixels.template cast<T>());
    rep.predictions.push_back({s.sample_id, s.label, pred, false});
    if (pred == s.label) ++clean_correct;
    if (s.label != target_label) {
      Tensor<T> trig = gen.transfer(s.pixels.template cast<T>(), ref_img.template cast<T>());
      int tpred = model.predict(trig);
      rep.predictions.push_back({s.sample_id, s.label, tpred, true});
      if (tpred == target_label) ++attack_hits;
      ++attack_total;
    }
  }
  rep.ba = 100.0 * clean_correct / static_cast<double>(d_test_clean.samples.size());
  rep.asr = attack_total ? 100.0 * attack_hits / static_cast<double>(attack_total) : 0.0;
  return rep;
}

}  // namespace makeup
