#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>

#include "makeup/core/tensor.hpp"

namespace makeup {

template <class T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  explicit Param(Tensor<T> v) : value(std::move(v)), grad(Tensor<T>::zeros(value.shape)) {}
  void zero_grad() { grad.zero(); }
};

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRM = Eigen::Map<MatRM<T>>;
template <class T>
using CMapRM = Eigen::Map<const MatRM<T>>;

// Reverse-mode tape over Tensor<T>. One tape per forward pass; parameter
// leaves alias Param objects and accumulate into Param::grad on backward().
template <class T>
class Tape {
 public:
  using Var = int;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape&)> back;
    bool needs_grad = false;
  };

  Var input(Tensor<T> v, bool needs_grad = false) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size()) - 1;
  }

  Var leaf(Param<T>& p) {
    Var v = input(p.value, true);
    param_links_.emplace_back(v, &p);
    return v;
  }

  const Tensor<T>& val(Var v) const { return nodes_[static_cast<size_t>(v)].value; }
  const Tensor<T>& grad(Var v) const { return nodes_[static_cast<size_t>(v)].grad; }
  Tensor<T>& grad_mut(Var v) { return nodes_[static_cast<size_t>(v)].grad; }
  bool needs_grad(Var v) const { return nodes_[static_cast<size_t>(v)].needs_grad; }
  T scalar(Var v) const { return val(v).data[0]; }
  size_t size() const { return nodes_.size(); }

  void backward(Var root) {
    assert(val(root).numel() == 1);
    if (!needs_grad(root)) return;
    for (auto& n : nodes_)
      if (n.needs_grad) n.grad = Tensor<T>::zeros(n.value.shape);
    nodes_[static_cast<size_t>(root)].grad.data[0] = T(1);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.needs_grad && n.back) n.back(*this);
    }
    for (auto& [v, p] : param_links_) {
      const Tensor<T>& g = grad(v);
      if (g.numel()) p->grad += g;
    }
  }

  // ---- elementwise ----

  Var add(Var a, Var b) {
    assert(val(a).same_shape(val(b)));
    Tensor<T> out = val(a);
    const auto& bv = val(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
    return make(std::move(out), {a, b}, [a, b](Tape& t, Var y) {
      t.acc(a, t.grad(y));
      t.acc(b, t.grad(y));
    });
  }

  Var sub(Var a, Var b) {
    assert(val(a).same_shape(val(b)));
    Tensor<T> out = val(a);
    const auto& bv = val(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
    return make(std::move(out), {a, b}, [a, b](Tape& t, Var y) {
      t.acc(a, t.grad(y));
      t.acc_neg(b, t.grad(y));
    });
  }

  Var mul(Var a, Var b) {
    assert(val(a).same_shape(val(b)));
    Tensor<T> out = val(a);
    const auto& bv = val(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    return make(std::move(out), {a, b}, [a, b](Tape& t, Var y) {
      const auto& g = t.grad(y);
      if (t.needs_grad(a)) {
        Tensor<T> ga = g;
        const auto& bv2 = t.val(b);
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] *= bv2[i];
        t.acc(a, ga);
      }
      if (t.needs_grad(b)) {
        Tensor<T> gb = g;
        const auto& av2 = t.val(a);
        for (int64_t i = 0; i < gb.numel(); ++i) gb[i] *= av2[i];
        t.acc(b, gb);
      }
    });
  }

  Var scale(Var a, T s) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x *= s;
    return make(std::move(out), {a}, [a, s](Tape& t, Var y) {
      Tensor<T> g = t.grad(y);
      for (auto& x : g.data) x *= s;
      t.acc(a, g);
    });
  }

  Var add_const(Var a, T c) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x += c;
    return make(std::move(out), {a}, [a](Tape& t, Var y) { t.acc(a, t.grad(y)); });
  }

  Var neg(Var a) { return scale(a, T(-1)); }

  Var relu(Var a) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = x > T(0) ? x : T(0);
    return make(std::move(out), {a}, [a](Tape& t, Var y) {
      Tensor<T> g = t.grad(y);
      const auto& av = t.val(a);
      for (int64_t i = 0; i < g.numel(); ++i)
        if (av[i] <= T(0)) g[i] = T(0);
      t.acc(a, g);
    });
  }

  Var lrelu(Var a, T slope) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = x > T(0) ? x : slope * x;
    return make(std::move(out), {a}, [a, slope](Tape& t, Var y) {
      Tensor<T> g = t.grad(y);
      const auto& av = t.val(a);
      for (int64_t i = 0; i < g.numel(); ++i)
        if (av[i] <= T(0)) g[i] *= slope;
      t.acc(a, g);
    });
  }

  Var sigmoid(Var a) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = T(1) / (T(1) + std::exp(-x));
    Var y = make(std::move(out), {a}, [](Tape&, Var) {});
    set_back(y, [a, y](Tape& t, Var) {
      Tensor<T> g = t.grad(y);
      const auto& yv = t.val(y);
      for (int64_t i = 0; i < g.numel(); ++i) g[i] *= yv[i] * (T(1) - yv[i]);
      t.acc(a, g);
    });
    return y;
  }

  Var tanh_(Var a) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = std::tanh(x);
    Var y = make(std::move(out), {a}, [](Tape&, Var) {});
    set_back(y, [a, y](Tape& t, Var) {
      Tensor<T> g = t.grad(y);
      const auto& yv = t.val(y);
      for (int64_t i = 0; i < g.numel(); ++i) g[i] *= (T(1) - yv[i] * yv[i]);
      t.acc(a, g);
    });
    return y;
  }

  Var log_(Var a) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = std::log(x);
    return make(std::move(out), {a}, [a](Tape& t, Var y) {
      Tensor<T> g = t.grad(y);
      const auto& av = t.val(a);
      for (int64_t i = 0; i < g.numel(); ++i) g[i] /= av[i];
      t.acc(a, g);
    });
  }

  Var clamp(Var a, T lo, T hi) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = x < lo ? lo : (x > hi ? hi : x);
    return make(std::move(out), {a}, [a, lo, hi](Tape& t, Var y) {
      Tensor<T> g = t.grad(y);
      const auto& av = t.val(a);
      for (int64_t i = 0; i < g.numel(); ++i)
        if (av[i] < lo || av[i] > hi) g[i] = T(0);
      t.acc(a, g);
    });
  }

  Var square(Var a) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = x * x;
    return make(std::move(out), {a}, [a](Tape& t, Var y) {
      Tensor<T> g = t.grad(y);
      const auto& av = t.val(a);
      for (int64_t i = 0; i < g.numel(); ++i) g[i] *= T(2) * av[i];
      t.acc(a, g);
    });
  }

  Var abs_(Var a) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = std::abs(x);
    return make(std::move(out), {a}, [a](Tape& t, Var y) {
      Tensor<T> g = t.grad(y);
      const auto& av = t.val(a);
      for (int64_t i = 0; i < g.numel(); ++i)
        g[i] *= av[i] > T(0) ? T(1) : (av[i] < T(0) ? T(-1) : T(0));
      t.acc(a, g);
    });
  }

  Var sqrt_(Var a) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = std::sqrt(x);
    Var y = make(std::move(out), {a}, [](Tape&, Var) {});
    set_back(y, [a, y](Tape& t, Var) {
      Tensor<T> g = t.grad(y);
      const auto& yv = t.val(y);
      for (int64_t i = 0; i < g.numel(); ++i) g[i] /= T(2) * yv[i];
      t.acc(a, g);
    });
    return y;
  }

  // Value copy with no gradient flow.
  Var detach(Var a) { return input(val(a), false); }

  // ---- reductions ----

  Var sum_all(Var a) {
    T s = T(0);
    for (const auto& x : val(a).data) s += x;
    return make(Tensor<T>::scalar(s), {a}, [a](Tape& t, Var y) {
      T g = t.grad(y).data[0];
      Tensor<T> ga = Tensor<T>::full(t.val(a).shape, g);
      t.acc(a, ga);
    });
  }

  Var mean_all(Var a) {
    int64_t n = val(a).numel();
    return scale(sum_all(a), T(1) / static_cast<T>(n));
  }

  // ---- linear algebra ----

  // a: [m,k], b: [k,n] -> [m,n]
  Var matmul(Var a, Var b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    assert(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0));
    int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor<T> out({m, n});
    CMapRM<T> A(av.data.data(), m, k), B(bv.data.data(), k, n);
    MapRM<T>(out.data.data(), m, n) = A * B;
    return make(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, Var y) {
      CMapRM<T> G(t.grad(y).data.data(), m, n);
      if (t.needs_grad(a)) {
        CMapRM<T> B2(t.val(b).data.data(), k, n);
        Tensor<T> ga({m, k});
        MapRM<T>(ga.data.data(), m, k) = G * B2.transpose();
        t.acc(a, ga);
      }
      if (t.needs_grad(b)) {
        CMapRM<T> A2(t.val(a).data.data(), m, k);
        Tensor<T> gb({k, n});
        MapRM<T>(gb.data.data(), k, n) = A2.transpose() * G;
        t.acc(b, gb);
      }
    });
  }

  // x: [k], w: [out,k], b: [out] -> [out]
  Var affine(Var x, Var w, Var b) {
    const auto& xv = val(x);
    const auto& wv = val(w);
    assert(wv.rank() == 2 && wv.dim(1) == xv.numel());
    int ko = wv.dim(0), ki = wv.dim(1);
    Tensor<T> out({ko});
    CMapRM<T> W(wv.data.data(), ko, ki);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> X(xv.data.data(), ki);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> O(out.data.data(), ko);
    O = W * X;
    for (int i = 0; i < ko; ++i) out[i] += val(b)[i];
    return make(std::move(out), {x, w, b}, [x, w, b, ko, ki](Tape& t, Var y) {
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> G(t.grad(y).data.data(), ko);
      if (t.needs_grad(x)) {
        CMapRM<T> W2(t.val(w).data.data(), ko, ki);
        Tensor<T> gx(t.val(x).shape);
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(gx.data.data(), ki) = W2.transpose() * G;
        t.acc(x, gx);
      }
      if (t.needs_grad(w)) {
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> X2(t.val(x).data.data(), ki);
        Tensor<T> gw({ko, ki});
        MapRM<T>(gw.data.data(), ko, ki) = G * X2.transpose();
        t.acc(w, gw);
      }
      if (t.needs_grad(b)) t.acc(b, t.grad(y));
    });
  }

  // ---- convolution (single image, [C,H,W]) ----

  // x: [Ci,H,W], w: [Co,Ci,kh,kw], b: [Co]
  Var conv2d(Var x, Var w, Var b, int stride, int pad) {
    const auto& xv = val(x);
    const auto& wv = val(w);
    assert(xv.rank() == 3 && wv.rank() == 4 && xv.dim(0) == wv.dim(1));
    int ci = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    int co = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    int ho = (h + 2 * pad - kh) / stride + 1;
    int wo = (wd + 2 * pad - kw) / stride + 1;
    int krows = ci * kh * kw, cols = ho * wo;

    auto col = std::make_shared<Tensor<T>>(std::vector<int>{krows, cols});
    im2col(xv, kh, kw, stride, pad, ho, wo, *col);

    Tensor<T> out({co, ho, wo});
    CMapRM<T> W(wv.data.data(), co, krows);
    CMapRM<T> C(col->data.data(), krows, cols);
    MapRM<T>(out.data.data(), co, cols) = W * C;
    const auto& bv = val(b);
    for (int c = 0; c < co; ++c)
      for (int i = 0; i < cols; ++i) out.data[static_cast<size_t>(c) * cols + i] += bv[c];

    return make(std::move(out), {x, w, b},
                [x, w, b, col, stride, pad, ci, h, wd, co, kh, kw, ho, wo, krows,
                 cols](Tape& t, Var y) {
      CMapRM<T> G(t.grad(y).data.data(), co, cols);
      if (t.needs_grad(w)) {
        CMapRM<T> C2(col->data.data(), krows, cols);
        Tensor<T> gw({co, ci, kh, kw});
        MapRM<T>(gw.data.data(), co, krows) = G * C2.transpose();
        t.acc(w, gw);
      }
      if (t.needs_grad(b)) {
        Tensor<T> gb({co});
        for (int c = 0; c < co; ++c) {
          T s = T(0);
          for (int i = 0; i < cols; ++i) s += t.grad(y).data[static_cast<size_t>(c) * cols + i];
          gb[c] = s;
        }
        t.acc(b, gb);
      }
      if (t.needs_grad(x)) {
        CMapRM<T> W2(t.val(w).data.data(), co, krows);
        Tensor<T> dcol({krows, cols});
        MapRM<T>(dcol.data.data(), krows, cols) = W2.transpose() * G;
        Tensor<T> gx({ci, h, wd});
        col2im(dcol, kh, kw, stride, pad, ho, wo, gx);
        t.acc(x, gx);
      }
    });
  }

  // Nearest-neighbour 2x upsample.
  Var upsample2(Var a) {
    const auto& av = val(a);
    assert(av.rank() == 3);
    int c = av.dim(0), h = av.dim(1), w = av.dim(2);
    Tensor<T> out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < 2 * h; ++y)
        for (int x = 0; x < 2 * w; ++x) out.at(ch, y, x) = av.at(ch, y / 2, x / 2);
    return make(std::move(out), {a}, [a, c, h, w](Tape& t, Var y) {
      const auto& g = t.grad(y);
      Tensor<T> ga({c, h, w});
      for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < 2 * h; ++yy)
          for (int xx = 0; xx < 2 * w; ++xx) ga.at(ch, yy / 2, xx / 2) += g.at(ch, yy, xx);
      t.acc(a, ga);
    });
  }

  // Global average pool: [C,H,W] -> [C]
  Var avg_pool_global(Var a) {
    const auto& av = val(a);
    assert(av.rank() == 3);
    int c = av.dim(0);
    int64_t hw = static_cast<int64_t>(av.dim(1)) * av.dim(2);
    Tensor<T> out({c});
    for (int ch = 0; ch < c; ++ch) {
      T s = T(0);
      for (int64_t i = 0; i < hw; ++i) s += av.data[static_cast<size_t>(ch) * hw + i];
      out[ch] = s / static_cast<T>(hw);
    }
    return make(std::move(out), {a}, [a, c, hw](Tape& t, Var y) {
      const auto& g = t.grad(y);
      Tensor<T> ga(t.val(a).shape);
      for (int ch = 0; ch < c; ++ch) {
        T gv = g[ch] / static_cast<T>(hw);
        for (int64_t i = 0; i < hw; ++i) ga.data[static_cast<size_t>(ch) * hw + i] = gv;
      }
      t.acc(a, ga);
    });
  }

  // ---- channel broadcast ops: x [C,H,W], v [C] ----

  Var channel_mean(Var a) {
    const auto& av = val(a);
    assert(av.rank() == 3);
    return avg_pool_global(a);
  }

  Var cb_sub(Var x, Var v) { return cb_op(x, v, /*op=*/0); }
  Var cb_add(Var x, Var v) { return cb_op(x, v, /*op=*/1); }
  Var cb_mul(Var x, Var v) { return cb_op(x, v, /*op=*/2); }
  Var cb_div(Var x, Var v) { return cb_op(x, v, /*op=*/3); }

  // Spatial broadcast multiply: x [C,H,W] * m [1,H,W] (or [H,W]).
  Var spatial_mul(Var x, Var m) {
    const auto& xv = val(x);
    const auto& mv = val(m);
    int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    int64_t hw = static_cast<int64_t>(h) * w;
    assert(mv.numel() == hw);
    Tensor<T> out = xv;
    for (int ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < hw; ++i) out.data[static_cast<size_t>(ch) * hw + i] *= mv[i];
    return make(std::move(out), {x, m}, [x, m, c, hw](Tape& t, Var y) {
      const auto& g = t.grad(y);
      if (t.needs_grad(x)) {
        Tensor<T> gx = g;
        const auto& mv2 = t.val(m);
        for (int ch = 0; ch < c; ++ch)
          for (int64_t i = 0; i < hw; ++i) gx.data[static_cast<size_t>(ch) * hw + i] *= mv2[i];
        t.acc(x, gx);
      }
      if (t.needs_grad(m)) {
        Tensor<T> gm(t.val(m).shape);
        const auto& xv2 = t.val(x);
        for (int ch = 0; ch < c; ++ch)
          for (int64_t i = 0; i < hw; ++i)
            gm[i] += g.data[static_cast<size_t>(ch) * hw + i] *
                     xv2.data[static_cast<size_t>(ch) * hw + i];
        t.acc(m, gm);
      }
    });
  }

  // Channel concat: [Ca,H,W] ++ [Cb,H,W] -> [Ca+Cb,H,W]
  Var concat_c(Var a, Var b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    assert(av.rank() == 3 && bv.rank() == 3 && av.dim(1) == bv.dim(1) && av.dim(2) == bv.dim(2));
    int ca = av.dim(0), cb = bv.dim(0), h = av.dim(1), w = av.dim(2);
    Tensor<T> out({ca + cb, h, w});
    std::copy(av.data.begin(), av.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.data.size());
    return make(std::move(out), {a, b}, [a, b, ca, cb, h, w](Tape& t, Var y) {
      const auto& g = t.grad(y);
      size_t na = static_cast<size_t>(ca) * h * w, nb = static_cast<size_t>(cb) * h * w;
      if (t.needs_grad(a)) {
        Tensor<T> ga({ca, h, w});
        std::copy(g.data.begin(), g.data.begin() + na, ga.data.begin());
        t.acc(a, ga);
      }
      if (t.needs_grad(b)) {
        Tensor<T> gb({cb, h, w});
        std::copy(g.data.begin() + na, g.data.begin() + na + nb, gb.data.begin());
        t.acc(b, gb);
      }
    });
  }

  // x / s with s a scalar var
  Var div_by_scalar(Var x, Var s) {
    T sv = val(s).data[0];
    Tensor<T> out = val(x);
    for (auto& v : out.data) v /= sv;
    return make(std::move(out), {x, s}, [x, s](Tape& t, Var y) {
      const auto& g = t.grad(y);
      T sv2 = t.val(s).data[0];
      if (t.needs_grad(x)) {
        Tensor<T> gx = g;
        for (auto& v : gx.data) v /= sv2;
        t.acc(x, gx);
      }
      if (t.needs_grad(s)) {
        const auto& xv = t.val(x);
        T acc_s = T(0);
        for (int64_t i = 0; i < g.numel(); ++i) acc_s -= g[i] * xv[i];
        Tensor<T> gs = Tensor<T>::scalar(acc_s / (sv2 * sv2));
        t.acc(s, gs);
      }
    });
  }

  // ---- losses / misc ----

  // logits [K], integer label -> scalar cross-entropy (nats).
  Var softmax_ce(Var logits, int label) {
    const auto& lv = val(logits);
    int k = static_cast<int>(lv.numel());
    T mx = lv[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, lv[i]);
    T z = T(0);
    for (int i = 0; i < k; ++i) z += std::exp(lv[i] - mx);
    T loss = std::log(z) - (lv[label] - mx);
    auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) (*probs)[static_cast<size_t>(i)] = std::exp(lv[i] - mx) / z;
    return make(Tensor<T>::scalar(loss), {logits}, [logits, label, probs, k](Tape& t, Var y) {
      T g = t.grad(y).data[0];
      Tensor<T> gl({k});
      for (int i = 0; i < k; ++i) gl[i] = g * (*probs)[static_cast<size_t>(i)];
      gl[label] -= g;
      t.acc(logits, gl);
    });
  }

  Var dot(Var a, Var b) { return sum_all(mul(a, b)); }

  // sqrt(sum x^2 + eps): smooth L2 norm.
  Var l2_norm(Var a, T eps = T(1e-12)) { return sqrt_(add_const(sum_all(square(a)), eps)); }

  Var l1_norm(Var a) { return sum_all(abs_(a)); }

  // cos(a,b); zero-norm convention handled by eps floor.
  Var cosine(Var a, Var b, T eps = T(1e-12)) {
    Var num = dot(a, b);
    Var den = mul(l2_norm(a, eps), l2_norm(b, eps));
    return div_scalar_pair(num, den);
  }

  // a/b for scalar vars
  Var div_scalar_pair(Var a, Var b) {
    T out = val(a).data[0] / val(b).data[0];
    return make(Tensor<T>::scalar(out), {a, b}, [a, b](Tape& t, Var y) {
      T g = t.grad(y).data[0];
      T av = t.val(a).data[0], bv = t.val(b).data[0];
      if (t.needs_grad(a)) {
        Tensor<T> ga = Tensor<T>::scalar(g / bv);
        t.acc(a, ga);
      }
      if (t.needs_grad(b)) {
        Tensor<T> gb = Tensor<T>::scalar(-g * av / (bv * bv));
        t.acc(b, gb);
      }
    });
  }

 private:
  std::vector<Node> nodes_;
  std::vector<std::pair<Var, Param<T>*>> param_links_;

  Var make(Tensor<T> out, std::initializer_list<Var> inputs,
           std::function<void(Tape&, Var)> back) {
    bool ng = false;
    for (Var v : inputs) ng = ng || needs_grad(v);
    Node n;
    n.value = std::move(out);
    n.needs_grad = ng;
    nodes_.push_back(std::move(n));
    Var y = static_cast<Var>(nodes_.size()) - 1;
    if (ng && back)
      nodes_[static_cast<size_t>(y)].back = [back, y](Tape& t) { back(t, y); };
    return y;
  }

  void set_back(Var y, std::function<void(Tape&, Var)> back) {
    if (nodes_[static_cast<size_t>(y)].needs_grad)
      nodes_[static_cast<size_t>(y)].back = [back, y](Tape& t) { back(t, y); };
  }

  void acc(Var v, const Tensor<T>& g) {
    if (!needs_grad(v)) return;
    nodes_[static_cast<size_t>(v)].grad += g;
  }

  void acc_neg(Var v, const Tensor<T>& g) {
    if (!needs_grad(v)) return;
    auto& dst = nodes_[static_cast<size_t>(v)].grad;
    for (int64_t i = 0; i < dst.numel(); ++i) dst[i] -= g[i];
  }

  Var cb_op(Var x, Var v, int op) {
    const auto& xv = val(x);
    const auto& vv = val(v);
    int c = xv.dim(0);
    int64_t hw = static_cast<int64_t>(xv.dim(1)) * xv.dim(2);
    assert(vv.numel() == c);
    Tensor<T> out = xv;
    for (int ch = 0; ch < c; ++ch) {
      T s = vv[ch];
      T* row = out.data.data() + static_cast<size_t>(ch) * hw;
      switch (op) {
        case 0: for (int64_t i = 0; i < hw; ++i) row[i] -= s; break;
        case 1: for (int64_t i = 0; i < hw; ++i) row[i] += s; break;
        case 2: for (int64_t i = 0; i < hw; ++i) row[i] *= s; break;
        default: for (int64_t i = 0; i < hw; ++i) row[i] /= s; break;
      }
    }
    return make(std::move(out), {x, v}, [x, v, c, hw, op](Tape& t, Var y) {
      const auto& g = t.grad(y);
      const auto& vv2 = t.val(v);
      const auto& xv2 = t.val(x);
      if (t.needs_grad(x)) {
        Tensor<T> gx = g;
        if (op == 2 || op == 3) {
          for (int ch = 0; ch < c; ++ch) {
            T s = vv2[ch];
            T* row = gx.data.data() + static_cast<size_t>(ch) * hw;
            if (op == 2)
              for (int64_t i = 0; i < hw; ++i) row[i] *= s;
            else
              for (int64_t i = 0; i < hw; ++i) row[i] /= s;
          }
        }
        t.acc(x, gx);
      }
      if (t.needs_grad(v)) {
        Tensor<T> gv({c});
        for (int ch = 0; ch < c; ++ch) {
          const T* grow = g.data.data() + static_cast<size_t>(ch) * hw;
          const T* xrow = xv2.data.data() + static_cast<size_t>(ch) * hw;
          T s = T(0);
          switch (op) {
            case 0: for (int64_t i = 0; i < hw; ++i) s -= grow[i]; break;
            case 1: for (int64_t i = 0; i < hw; ++i) s += grow[i]; break;
            case 2: for (int64_t i = 0; i < hw; ++i) s += grow[i] * xrow[i]; break;
            default: {
              T inv = T(1) / (vv2[ch] * vv2[ch]);
              for (int64_t i = 0; i < hw; ++i) s -= grow[i] * xrow[i] * inv;
              break;
            }
          }
          gv[ch] = s;
        }
        t.acc(v, gv);
      }
    });
  }

  static void im2col(const Tensor<T>& x, int kh, int kw, int stride, int pad, int ho, int wo,
                     Tensor<T>& col) {
    int ci = x.dim(0), h = x.dim(1), w = x.dim(2);
    int cols = ho * wo;
    col.zero();
    for (int c = 0; c < ci; ++c)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          int krow = (c * kh + ky) * kw + kx;
          T* dst = col.data.data() + static_cast<size_t>(krow) * cols;
          for (int oy = 0; oy < ho; ++oy) {
            int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            const T* src = x.data.data() + (static_cast<size_t>(c) * h + iy) * w;
            for (int ox = 0; ox < wo; ++ox) {
              int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= w) continue;
              dst[oy * wo + ox] = src[ix];
            }
          }
        }
  }

  static void col2im(const Tensor<T>& col, int kh, int kw, int stride, int pad, int ho, int wo,
                     Tensor<T>& x) {
    int ci = x.dim(0), h = x.dim(1), w = x.dim(2);
    int cols = ho * wo;
    x.zero();
    for (int c = 0; c < ci; ++c)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          int krow = (c * kh + ky) * kw + kx;
          const T* src = col.data.data() + static_cast<size_t>(krow) * cols;
          for (int oy = 0; oy < ho; ++oy) {
            int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            T* dst = x.data.data() + (static_cast<size_t>(c) * h + iy) * w;
            for (int ox = 0; ox < wo; ++ox) {
              int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= w) continue;
              dst[ix] += src[oy * wo + ox];
            }
          }
        }
  }
};

}  // namespace makeup
