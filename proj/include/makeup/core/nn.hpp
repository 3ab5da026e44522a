#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "makeup/core/tape.hpp"
#include "makeup/core/tensor.hpp"

namespace makeup::nn {

template <class T>
using ParamMap = std::vector<std::pair<std::string, Param<T>*>>;

template <class T>
inline void kaiming_init(Tensor<T>& w, int fan_in, Rng& rng) {
  double bound = std::sqrt(6.0 / fan_in);
  for (auto& x : w.data) x = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
struct Conv2d {
  Param<T> w, b;
  int stride = 1, pad = 1;

  Conv2d() = default;
  Conv2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng)
      : stride(stride_), pad(pad_) {
    Tensor<T> wt({cout, cin, k, k});
    kaiming_init(wt, cin * k * k, rng);
    w = Param<T>(std::move(wt));
    b = Param<T>(Tensor<T>::zeros({cout}));
  }

  void zero_init() {
    w.value.zero();
    b.value.zero();
  }

  typename Tape<T>::Var operator()(Tape<T>& t, typename Tape<T>::Var x) {
    return t.conv2d(x, t.leaf(w), t.leaf(b), stride, pad);
  }

  void collect(const std::string& prefix, ParamMap<T>& out) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
  }
};

template <class T>
struct Linear {
  Param<T> w, b;

  Linear() = default;
  Linear(int in, int out, Rng& rng) {
    Tensor<T> wt({out, in});
    kaiming_init(wt, in, rng);
    w = Param<T>(std::move(wt));
    b = Param<T>(Tensor<T>::zeros({out}));
  }

  typename Tape<T>::Var operator()(Tape<T>& t, typename Tape<T>::Var x) {
    return t.affine(x, t.leaf(w), t.leaf(b));
  }

  void collect(const std::string& prefix, ParamMap<T>& out) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
  }
};

// Instance norm with learnable affine; stats are per-channel over H,W.
template <class T>
struct InstanceNorm {
  Param<T> gamma, beta;
  T eps = T(1e-5);

  InstanceNorm() = default;
  explicit InstanceNorm(int c)
      : gamma(Tensor<T>::full({c}, T(1))), beta(Tensor<T>::zeros({c})) {}

  typename Tape<T>::Var operator()(Tape<T>& t, typename Tape<T>::Var x) {
    // A 1x1 plane would normalize to exactly zero and erase the signal;
    // fall back to plain scale/shift there.
    if (t.val(x).dim(1) * t.val(x).dim(2) > 1) {
      auto mu = t.channel_mean(x);
      auto centered = t.cb_sub(x, mu);
      auto var = t.channel_mean(t.square(centered));
      auto std = t.sqrt_(t.add_const(var, eps));
      x = t.cb_div(centered, std);
    }
    return t.cb_add(t.cb_mul(x, t.leaf(gamma)), t.leaf(beta));
  }

  void collect(const std::string& prefix, ParamMap<T>& out) {
    out.emplace_back(prefix + ".gamma", &gamma);
    out.emplace_back(prefix + ".beta", &beta);
  }
};

// Normalize x by its own instance stats, then apply externally supplied
// per-channel scale/shift (style injection).
template <class T>
inline typename Tape<T>::Var adain(Tape<T>& t, typename Tape<T>::Var x,
                                   typename Tape<T>::Var scale_c,
                                   typename Tape<T>::Var shift_c, T eps = T(1e-5)) {
  auto mu = t.channel_mean(x);
  auto centered = t.cb_sub(x, mu);
  auto var = t.channel_mean(t.square(centered));
  auto std = t.sqrt_(t.add_const(var, eps));
  auto normed = t.cb_div(centered, std);
  return t.cb_add(t.cb_mul(normed, scale_c), shift_c);
}

template <class T>
inline void zero_grads(const ParamMap<T>& params) {
  for (auto& [name, p] : params) p->zero_grad();
}

template <class T>
struct Sgd {
  T lr, momentum, weight_decay;
  std::vector<Tensor<T>> vel;

  Sgd(T lr_, T momentum_ = T(0.9), T wd = T(5e-4))
      : lr(lr_), momentum(momentum_), weight_decay(wd) {}

  void step(const ParamMap<T>& params) {
    if (vel.empty())
      for (auto& [name, p] : params) vel.push_back(Tensor<T>::zeros(p->value.shape));
    for (size_t i = 0; i < params.size(); ++i) {
      Param<T>& p = *params[i].second;
      for (int64_t j = 0; j < p.value.numel(); ++j) {
        T g = p.grad[j] + weight_decay * p.value[j];
        vel[i][j] = momentum * vel[i][j] + g;
        p.value[j] -= lr * vel[i][j];
      }
    }
  }
};

template <class T>
struct Adam {
  T lr, beta1, beta2, eps;
  int64_t t_ = 0;
  std::vector<Tensor<T>> m, v;

  Adam(T lr_, T b1 = T(0.5), T b2 = T(0.999), T eps_ = T(1e-8))
      : lr(lr_), beta1(b1), beta2(b2), eps(eps_) {}

  void step(const ParamMap<T>& params) {
    if (m.empty())
      for (auto& [name, p] : params) {
        m.push_back(Tensor<T>::zeros(p->value.shape));
        v.push_back(Tensor<T>::zeros(p->value.shape));
      }
    ++t_;
    T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1), static_cast<double>(t_)));
    T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2), static_cast<double>(t_)));
    for (size_t i = 0; i < params.size(); ++i) {
      Param<T>& p = *params[i].second;
      for (int64_t j = 0; j < p.value.numel(); ++j) {
        T g = p.grad[j];
        m[i][j] = beta1 * m[i][j] + (T(1) - beta1) * g;
        v[i][j] = beta2 * v[i][j] + (T(1) - beta2) * g * g;
        T mh = m[i][j] / bc1, vh = v[i][j] / bc2;
        p.value[j] -= lr * mh / (std::sqrt(vh) + eps);
      }
    }
  }
};

// FNV-1a over raw parameter bytes; used to assert freeze contracts.
template <class T>
inline uint64_t param_hash(const ParamMap<T>& params) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const unsigned char* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (auto& [name, p] : params) {
    mix(reinterpret_cast<const unsigned char*>(name.data()), name.size());
    mix(reinterpret_cast<const unsigned char*>(p->value.data.data()),
        p->value.data.size() * sizeof(T));
  }
  return h;
}

}  // namespace makeup::nn
