#pragma once

#include <stdexcept>
#include <vector>

#include "makeup/gan/models.hpp"

namespace makeup {

struct LossWeights {
  double adv_d = 1.0;
  double adv_g = 1.0;
  double cyc_g = 10.0;
  double mk_g = 1.0;
  double reg_g = 1.0;
  double per_g = 0.0;
  double adv_r = 1.0;
  double mk_r = 1.0;
  double reg_r = 1.0;
  double per_r = 0.0;

  void validate() const {
    for (double v : {adv_d, adv_g, cyc_g, mk_g, reg_g, per_g, adv_r, mk_r, reg_r, per_r})
      if (v < 0.0 || !std::isfinite(v))
        throw std::invalid_argument("loss weights must be finite and nonnegative");
  }
};

enum class TrainPhase { Pretrain, Finetune };

template <class T>
struct FineTuneContext {
  FeatureFn<T> extractor;                    // frozen target feature map M
  std::vector<Tensor<T>> guidance;           // clean target-label samples x_g
  double noise_mean = 0.0, noise_std = 0.05; // psi
  int noise_draws_per_fake = 2;

  void validate() const {
    if (guidance.empty()) throw std::invalid_argument("finetune guidance set empty");
    if (noise_std < 0.0) throw std::invalid_argument("noise std must be >= 0");
    if (noise_draws_per_fake < 1)
      throw std::invalid_argument("noise_draws_per_fake must be >= 1");
  }
};

namespace gan {

template <class T>
using Var = typename Tape<T>::Var;

constexpr double kLogEps = 1e-7;

template <class T>
inline Var<T> log_prob(Tape<T>& t, Var<T> p) {
  return t.log_(t.clamp(p, T(kLogEps), T(1.0 - kLogEps)));
}

// Rectified cycle consistency: the S -> R^M -> R -> S^M -> S loop in both
// directions, rectifier applied after each transfer.
template <class T>
inline Var<T> cycle_loss(Tape<T>& t, GeneratorBundle<T>& b, Var<T> s, Var<T> r,
                         bool use_rectifier = true) {
  auto rect = [&](Var<T> x) { return use_rectifier ? b.rect(t, x) : x; };
  auto fwd = rect(b.g(t, s, r));
  auto back = rect(b.g(t, fwd, s));
  auto fwd2 = rect(b.g(t, r, s));
  auto back2 = rect(b.g(t, fwd2, r));
  return t.add(t.l1_norm(t.sub(back, s)), t.l1_norm(t.sub(back2, r)));
}

template <class T>
struct AdvLosses {
  Var<T> d_s, d_r, g, r;
};

// Non-saturating cross-entropy adversarial terms; D scores clamped to
// [1e-7, 1-1e-7] before the log.
template <class T>
inline AdvLosses<T> adversarial_losses(Tape<T>& t, GeneratorBundle<T>& b, Var<T> s, Var<T> r,
                                       bool use_rectifier = true) {
  auto fake_s = b.g(t, r, s);  // toward source domain
  auto fake_r = b.g(t, s, r);  // toward reference domain
  AdvLosses<T> out;
  out.d_s = t.neg(t.add(log_prob(t, b.d_s(t, s)),
                        log_prob(t, t.add_const(t.neg(b.d_s(t, fake_s)), T(1)))));
  out.d_r = t.neg(t.add(log_prob(t, b.d_r(t, r)),
                        log_prob(t, t.add_const(t.neg(b.d_r(t, fake_r)), T(1)))));
  out.g = t.neg(t.add(log_prob(t, b.d_s(t, fake_s)), log_prob(t, b.d_r(t, fake_r))));
  if (use_rectifier) {
    out.r = t.neg(t.add(log_prob(t, b.d_s(t, b.rect(t, fake_s))),
                        log_prob(t, b.d_r(t, b.rect(t, fake_r)))));
  } else {
    out.r = t.input(Tensor<T>::scalar(T(0)), false);
  }
  return out;
}

template <class T>
struct MakeupLosses {
  Var<T> g, r;
};

// hm_sr = HM(s,r), hm_rs = HM(r,s): precomputed pseudo-ground-truths.
template <class T>
inline MakeupLosses<T> makeup_loss(Tape<T>& t, GeneratorBundle<T>& b, Var<T> s, Var<T> r,
                                   Var<T> hm_sr, Var<T> hm_rs, bool use_rectifier = true) {
  auto fake_r = b.g(t, s, r);
  auto fake_s = b.g(t, r, s);
  MakeupLosses<T> out;
  out.g = t.add(t.l2_norm(t.sub(fake_r, hm_sr)), t.l2_norm(t.sub(fake_s, hm_rs)));
  if (use_rectifier) {
    out.r = t.add(t.l2_norm(t.sub(b.rect(t, fake_r), hm_sr)),
                  t.l2_norm(t.sub(b.rect(t, fake_s), hm_rs)));
  } else {
    out.r = t.input(Tensor<T>::scalar(T(0)), false);
  }
  return out;
}

// Self-transfer regularizer. Default reading penalizes the deviation
// ||R(G(x,x)) - x||_1 plus a perceptual distance; the literal image-norm
// reading ||R(G(x,x))||_1 is available behind `literal_norm`.
template <class T>
inline Var<T> regularization_loss(Tape<T>& t, GeneratorBundle<T>& b,
                                  const PerceptualMetric<T>& lpips, Var<T> s, Var<T> r,
                                  bool use_rectifier = true, bool literal_norm = false) {
  auto term = [&](Var<T> x) {
    auto self_t = b.g(t, x, x);
    auto y = use_rectifier ? b.rect(t, self_t) : self_t;
    auto l1 = literal_norm ? t.l1_norm(y) : t.l1_norm(t.sub(y, x));
    return t.add(l1, lpips.distance(t, y, x));
  };
  return t.add(term(s), term(r));
}

template <class T>
struct PerceptualLosses {
  Var<T> g, r;
};

// Feature alignment for fine-tuning. psi noise draws are supplied by the
// caller so the training loop controls the random stream.
template <class T>
inline PerceptualLosses<T> perceptual_loss(Tape<T>& t, GeneratorBundle<T>& b,
                                           const FineTuneContext<T>& ctx, Var<T> s, Var<T> r,
                                           Rng& rng, bool use_rectifier = true) {
  ctx.validate();
  auto fake_r = b.g(t, s, r);
  auto fake_s = b.g(t, r, s);

  auto noise = [&]() {
    Tensor<T> n(t.val(fake_r).shape);
    for (auto& v : n.data)
      v = static_cast<T>(rng.normal(ctx.noise_mean, ctx.noise_std));
    return t.input(std::move(n), false);
  };

  auto direction = [&](Var<T> fake) {
    Var<T> acc = t.input(Tensor<T>::scalar(T(0)), false);
    int terms = 0;
    for (const auto& xg : ctx.guidance) {
      Tape<T>* tp = &t;
      auto feat_g = ctx.extractor(*tp, t.input(xg, false));
      for (int d = 0; d < ctx.noise_draws_per_fake; ++d) {
        auto noisy = t.clamp(t.add(fake, noise()), T(0), T(1));
        auto feat_f = ctx.extractor(t, noisy);
        acc = t.add(acc, t.add_const(t.neg(t.cosine(feat_g, feat_f)), T(1)));
        ++terms;
      }
    }
    return t.scale(acc, T(1) / static_cast<T>(terms));
  };

  PerceptualLosses<T> out;
  out.g = t.add(direction(fake_r), direction(fake_s));

  if (use_rectifier) {
    auto anchor = [&](Var<T> src, Var<T> fake) {
      auto feat_src = ctx.extractor(t, src);
      auto feat_rect = ctx.extractor(t, b.rect(t, fake));
      return t.add_const(t.neg(t.cosine(feat_src, feat_rect)), T(1));
    };
    out.r = t.add(anchor(s, fake_r), anchor(r, fake_s));
  } else {
    out.r = t.input(Tensor<T>::scalar(T(0)), false);
  }
  return out;
}

template <class T>
struct LossParts {
  Var<T> adv_ds, adv_dr, adv_g, adv_r, cyc, mk_g, mk_r, reg, per_g, per_r;
  bool has_per = false;
};

template <class T>
struct TotalLosses {
  Var<T> d, g, r;
};

// Weighted totals; perceptual terms are gated to the fine-tune phase.
template <class T>
inline TotalLosses<T> total_losses(Tape<T>& t, const LossWeights& w, const LossParts<T>& p,
                                   TrainPhase phase) {
  w.validate();
  if (phase == TrainPhase::Pretrain && (w.per_g > 0.0 || w.per_r > 0.0))
    throw std::invalid_argument("perceptual weights must be zero during pre-training");
  TotalLosses<T> out;
  out.d = t.scale(t.add(p.adv_ds, p.adv_dr), T(w.adv_d));
  out.g = t.add(t.add(t.scale(p.adv_g, T(w.adv_g)), t.scale(p.cyc, T(w.cyc_g))),
                t.add(t.scale(p.mk_g, T(w.mk_g)), t.scale(p.reg, T(w.reg_g))));
  out.r = t.add(t.add(t.scale(p.adv_r, T(w.adv_r)), t.scale(p.mk_r, T(w.mk_r))),
                t.scale(p.reg, T(w.reg_r)));
  if (phase == TrainPhase::Finetune && p.has_per) {
    out.g = t.add(out.g, t.scale(p.per_g, T(w.per_g)));
    out.r = t.add(out.r, t.scale(p.per_r, T(w.per_r)));
  }
  return out;
}

}  // namespace gan
}  // namespace makeup
