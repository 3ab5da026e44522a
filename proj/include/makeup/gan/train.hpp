#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "makeup/faceprep/histmatch.hpp"
#include "makeup/gan/losses.hpp"

namespace makeup {

// Generator-training corpus: non-makeup sources, makeup references, and
// region masks for every image (keyed by sample_id) for the HM targets.
template <class T>
struct GanTrainData {
  std::vector<Tensor<T>> sources, refs;
  std::vector<std::string> source_ids, ref_ids;
  std::map<std::string, RegionMaskSet> masks;
};

struct GanTrainConfig {
  int epochs = 5;
  int batch_size = 2;
  double lr = 2e-4;
  double beta1 = 0.5, beta2 = 0.999;
  LossWeights weights;
  uint64_t seed = 1;
  bool use_rectifier = true;
  bool literal_reg_norm = false;
  std::string checkpoint_dir;  // optional; per-epoch snapshots when set
  std::string curve_csv;       // optional training-curve output
};

struct GanEpochLog {
  int epoch = 0;
  double l_d = 0, l_g = 0, l_r = 0;
  double adv_ds = 0, adv_dr = 0, adv_g = 0, adv_r = 0;
  double cyc = 0, mk_g = 0, mk_r = 0, reg = 0, per_g = 0, per_r = 0;
};

struct TrainingDiverged : std::runtime_error {
  std::string last_good_checkpoint;
  TrainingDiverged(const std::string& msg, std::string ckpt)
      : std::runtime_error(msg), last_good_checkpoint(std::move(ckpt)) {}
};

inline void write_gan_curve(const std::string& path, const std::vector<GanEpochLog>& logs) {
  std::ofstream f(path);
  f << "epoch,l_d,l_g,l_r,adv_ds,adv_dr,adv_g,adv_r,cyc,mk_g,mk_r,reg,per_g,per_r\n";
  for (const auto& l : logs)
    f << l.epoch << ',' << l.l_d << ',' << l.l_g << ',' << l.l_r << ',' << l.adv_ds << ','
      << l.adv_dr << ',' << l.adv_g << ',' << l.adv_r << ',' << l.cyc << ',' << l.mk_g << ','
      << l.mk_r << ',' << l.reg << ',' << l.per_g << ',' << l.per_r << "\n";
}

// Alternating D-step / G-step / R-step optimization of the weighted
// totals. One call = one version increment. Pre-training when ctx is
// null, fine-tuning (adds the perceptual terms) otherwise.
template <class T>
inline std::vector<GanEpochLog> train_generator(GeneratorBundle<T>& b, const GanTrainData<T>& data,
                                                const GanTrainConfig& cfg, TrainPhase phase,
                                                const FineTuneContext<T>* ctx = nullptr) {
  cfg.weights.validate();
  if (phase == TrainPhase::Finetune && !ctx)
    throw std::invalid_argument("fine-tune phase requires a FineTuneContext");
  if (data.sources.empty() || data.refs.empty())
    throw std::invalid_argument("generator training data empty");

  b.version += 1;
  PerceptualMetric<T> lpips;
  auto pg = b.params_g();
  auto pds = b.params_ds();
  auto pdr = b.params_dr();
  auto pr = b.params_r();
  nn::Adam<T> opt_g(T(cfg.lr), T(cfg.beta1), T(cfg.beta2));
  nn::Adam<T> opt_ds(T(cfg.lr), T(cfg.beta1), T(cfg.beta2));
  nn::Adam<T> opt_dr(T(cfg.lr), T(cfg.beta1), T(cfg.beta2));
  nn::Adam<T> opt_r(T(cfg.lr), T(cfg.beta1), T(cfg.beta2));
  Rng rng(cfg.seed);

  namespace fs = std::filesystem;
  std::string last_good;
  auto snapshot = [&](int epoch) {
    if (cfg.checkpoint_dir.empty()) return;
    fs::create_directories(cfg.checkpoint_dir);
    std::string p = cfg.checkpoint_dir + "/gen_v" + std::to_string(b.version) + "_epoch" +
                    std::to_string(epoch) + ".ckpt";
    b.save(p);
    b.save(cfg.checkpoint_dir + "/gen_latest.ckpt");
    last_good = p;
  };

  std::vector<GanEpochLog> logs;
  int ns = static_cast<int>(data.sources.size());
  int nr = static_cast<int>(data.refs.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> sperm = rng.permutation(ns);
    std::vector<int> rperm = rng.permutation(std::max(ns, nr));
    GanEpochLog log;
    log.epoch = epoch;
    int batches = 0;

    for (int start = 0; start < ns; start += cfg.batch_size) {
      int bs = std::min(cfg.batch_size, ns - start);
      Tape<T> t;
      gan::LossParts<T> parts;
      bool first = true;
      for (int k = 0; k < bs; ++k) {
        int si = sperm[static_cast<size_t>(start + k)];
        int ri = rperm[static_cast<size_t>(start + k)] % nr;
        const Tensor<T>& simg = data.sources[static_cast<size_t>(si)];
        const Tensor<T>& rimg = data.refs[static_cast<size_t>(ri)];
        const RegionMaskSet& ms = data.masks.at(data.source_ids[static_cast<size_t>(si)]);
        const RegionMaskSet& mr = data.masks.at(data.ref_ids[static_cast<size_t>(ri)]);

        Image s32 = simg.template cast<real>();
        Image r32 = rimg.template cast<real>();
        Image hm_sr = compose_hm(s32, r32, ms, mr).pixels;
        Image hm_rs = compose_hm(r32, s32, mr, ms).pixels;

        auto vs = t.input(simg);
        auto vr = t.input(rimg);
        auto vhm_sr = t.input(hm_sr.template cast<T>());
        auto vhm_rs = t.input(hm_rs.template cast<T>());

        auto adv = gan::adversarial_losses(t, b, vs, vr, cfg.use_rectifier);
        auto cyc = gan::cycle_loss(t, b, vs, vr, cfg.use_rectifier);
        auto mk = gan::makeup_loss(t, b, vs, vr, vhm_sr, vhm_rs, cfg.use_rectifier);
        auto reg = gan::regularization_loss(t, b, lpips, vs, vr, cfg.use_rectifier,
                                            cfg.literal_reg_norm);
        gan::PerceptualLosses<T> per;
        bool has_per = phase == TrainPhase::Finetune;
        if (has_per) per = gan::perceptual_loss(t, b, *ctx, vs, vr, rng, cfg.use_rectifier);

        if (first) {
          parts.adv_ds = adv.d_s; parts.adv_dr = adv.d_r; parts.adv_g = adv.g;
          parts.adv_r = adv.r; parts.cyc = cyc; parts.mk_g = mk.g; parts.mk_r = mk.r;
          parts.reg = reg;
          if (has_per) { parts.per_g = per.g; parts.per_r = per.r; }
          parts.has_per = has_per;
          first = false;
        } else {
          parts.adv_ds = t.add(parts.adv_ds, adv.d_s);
          parts.adv_dr = t.add(parts.adv_dr, adv.d_r);
          parts.adv_g = t.add(parts.adv_g, adv.g);
          parts.adv_r = t.add(parts.adv_r, adv.r);
          parts.cyc = t.add(parts.cyc, cyc);
          parts.mk_g = t.add(parts.mk_g, mk.g);
          parts.mk_r = t.add(parts.mk_r, mk.r);
          parts.reg = t.add(parts.reg, reg);
          if (has_per) {
            parts.per_g = t.add(parts.per_g, per.g);
            parts.per_r = t.add(parts.per_r, per.r);
          }
        }
      }
      T inv = T(1) / static_cast<T>(bs);
      parts.adv_ds = t.scale(parts.adv_ds, inv);
      parts.adv_dr = t.scale(parts.adv_dr, inv);
      parts.adv_g = t.scale(parts.adv_g, inv);
      parts.adv_r = t.scale(parts.adv_r, inv);
      parts.cyc = t.scale(parts.cyc, inv);
      parts.mk_g = t.scale(parts.mk_g, inv);
      parts.mk_r = t.scale(parts.mk_r, inv);
      parts.reg = t.scale(parts.reg, inv);
      if (parts.has_per) {
        parts.per_g = t.scale(parts.per_g, inv);
        parts.per_r = t.scale(parts.per_r, inv);
      }

      auto totals = gan::total_losses(t, cfg.weights, parts, phase);
      double ld = t.scalar(totals.d), lg = t.scalar(totals.g),
             lr_ = t.scalar(totals.r);
      if (!std::isfinite(ld) || !std::isfinite(lg) || !std::isfinite(lr_))
        throw TrainingDiverged("non-finite generator loss at epoch " + std::to_string(epoch),
                               last_good);

      nn::zero_grads(pds); nn::zero_grads(pdr); nn::zero_grads(pg); nn::zero_grads(pr);
      t.backward(totals.d);
      opt_ds.step(pds);
      opt_dr.step(pdr);

      nn::zero_grads(pds); nn::zero_grads(pdr); nn::zero_grads(pg); nn::zero_grads(pr);
      t.backward(totals.g);
      opt_g.step(pg);

      if (cfg.use_rectifier) {
        nn::zero_grads(pds); nn::zero_grads(pdr); nn::zero_grads(pg); nn::zero_grads(pr);
        t.backward(totals.r);
        opt_r.step(pr);
      }

      log.l_d += ld; log.l_g += lg; log.l_r += lr_;
      log.adv_ds += t.scalar(parts.adv_ds); log.adv_dr += t.scalar(parts.adv_dr);
      log.adv_g += t.scalar(parts.adv_g); log.adv_r += t.scalar(parts.adv_r);
      log.cyc += t.scalar(parts.cyc); log.mk_g += t.scalar(parts.mk_g);
      log.mk_r += t.scalar(parts.mk_r); log.reg += t.scalar(parts.reg);
      if (parts.has_per) {
        log.per_g += t.scalar(parts.per_g);
        log.per_r += t.scalar(parts.per_r);
      }
      ++batches;
    }

    double inv = batches ? 1.0 / batches : 0.0;
    log.l_d *= inv; log.l_g *= inv; log.l_r *= inv;
    log.adv_ds *= inv; log.adv_dr *= inv; log.adv_g *= inv; log.adv_r *= inv;
    log.cyc *= inv; log.mk_g *= inv; log.mk_r *= inv; log.reg *= inv;
    log.per_g *= inv; log.per_r *= inv;
    logs.push_back(log);
    snapshot(epoch);
  }

  if (!cfg.curve_csv.empty()) write_gan_curve(cfg.curve_csv, logs);
  return logs;
}

template <class T>
inline std::vector<GanEpochLog> pretrain_generator(GeneratorBundle<T>& b,
                                                   const GanTrainData<T>& data,
                                                   const GanTrainConfig& cfg) {
  return train_generator<T>(b, data, cfg, TrainPhase::Pretrain, nullptr);
}

template <class T>
inline std::vector<GanEpochLog> finetune_generator(GeneratorBundle<T>& b,
                                                   const GanTrainData<T>& data,
                                                   const GanTrainConfig& cfg,
                                                   const FineTuneContext<T>& ctx) {
  return train_generator(b, data, cfg, TrainPhase::Finetune, &ctx);
}

}  // namespace makeup
