#pragma once

#include <functional>
#include <json.hpp>
#include <string>

#include "makeup/core/nn.hpp"
#include "makeup/core/serialize.hpp"

namespace makeup {

template <class T>
using FeatureFn = std::function<typename Tape<T>::Var(Tape<T>&, typename Tape<T>::Var)>;

// Style-injection U-shaped makeup-transfer generator. The reference image
// drives per-channel AdaIN scale/shift in the bottleneck; the output head
// is a zero-initialized residual over the source, so a fresh generator is
// the identity map.
template <class T>
struct GeneratorNet {
  int base = 8;
  nn::Conv2d<T> e1, e2, e3;
  nn::InstanceNorm<T> in1, in2, in3;
  nn::Conv2d<T> se1, se2;
  nn::Linear<T> style_scale, style_shift;
  nn::Conv2d<T> b1, b2;
  nn::Conv2d<T> d1, d2, out_head;
  nn::InstanceNorm<T> ind1, ind2;

  GeneratorNet() = default;
  GeneratorNet(int base_, Rng& rng) : base(base_) {
    int f = base, f2 = 2 * base;
    e1 = nn::Conv2d<T>(3, f, 3, 1, 1, rng);
    e2 = nn::Conv2d<T>(f, f2, 3, 2, 1, rng);
    e3 = nn::Conv2d<T>(f2, f2, 3, 2, 1, rng);
    in1 = nn::InstanceNorm<T>(f);
    in2 = nn::InstanceNorm<T>(f2);
    in3 = nn::InstanceNorm<T>(f2);
    se1 = nn::Conv2d<T>(3, f, 3, 2, 1, rng);
    se2 = nn::Conv2d<T>(f, f2, 3, 2, 1, rng);
    style_scale = nn::Linear<T>(f2, f2, rng);
    style_shift = nn::Linear<T>(f2, f2, rng);
    b1 = nn::Conv2d<T>(f2, f2, 3, 1, 1, rng);
    b2 = nn::Conv2d<T>(f2, f2, 3, 1, 1, rng);
    d1 = nn::Conv2d<T>(f2, f, 3, 1, 1, rng);
    d2 = nn::Conv2d<T>(f, f, 3, 1, 1, rng);
    ind1 = nn::InstanceNorm<T>(f);
    ind2 = nn::InstanceNorm<T>(f);
    out_head = nn::Conv2d<T>(f, 3, 3, 1, 1, rng);
    out_head.zero_init();
  }

  typename Tape<T>::Var operator()(Tape<T>& t, typename Tape<T>::Var s,
                                   typename Tape<T>::Var r) {
    auto hs = t.relu(se1(t, r));
    hs = t.relu(se2(t, hs));
    auto sv = t.avg_pool_global(hs);
    auto sc = t.add_const(style_scale(t, sv), T(1));
    auto sh = style_shift(t, sv);

    auto x = t.relu(in1(t, e1(t, s)));
    x = t.relu(in2(t, e2(t, x)));
    x = t.relu(in3(t, e3(t, x)));
    x = t.relu(nn::adain(t, b1(t, x), sc, sh));
    x = t.relu(nn::adain(t, b2(t, x), sc, sh));
    x = t.relu(ind1(t, d1(t, t.upsample2(x))));
    x = t.relu(ind2(t, d2(t, t.upsample2(x))));
    auto res = t.tanh_(out_head(t, x));
    return t.clamp(t.add(s, res), T(0), T(1));
  }

  void collect(const std::string& p, nn::ParamMap<T>& m) {
    e1.collect(p + ".e1", m); e2.collect(p + ".e2", m); e3.collect(p + ".e3", m);
    in1.collect(p + ".in1", m); in2.collect(p + ".in2", m); in3.collect(p + ".in3", m);
    se1.collect(p + ".se1", m); se2.collect(p + ".se2", m);
    style_scale.collect(p + ".style_scale", m); style_shift.collect(p + ".style_shift", m);
    b1.collect(p + ".b1", m); b2.collect(p + ".b2", m);
    d1.collect(p + ".d1", m); d2.collect(p + ".d2", m);
    ind1.collect(p + ".ind1", m); ind2.collect(p + ".ind2", m);
    out_head.collect(p + ".out", m);
  }
};

// Patch-free domain discriminator; sigmoid head keeps scores in (0,1).
template <class T>
struct DiscriminatorNet {
  nn::Conv2d<T> c1, c2, c3;
  nn::Linear<T> head;

  DiscriminatorNet() = default;
  DiscriminatorNet(int base, Rng& rng) {
    c1 = nn::Conv2d<T>(3, base, 3, 2, 1, rng);
    c2 = nn::Conv2d<T>(base, 2 * base, 3, 2, 1, rng);
    c3 = nn::Conv2d<T>(2 * base, 4 * base, 3, 2, 1, rng);
    head = nn::Linear<T>(4 * base, 1, rng);
  }

  typename Tape<T>::Var operator()(Tape<T>& t, typename Tape<T>::Var x) {
    auto h = t.lrelu(c1(t, x), T(0.2));
    h = t.lrelu(c2(t, h), T(0.2));
    h = t.lrelu(c3(t, h), T(0.2));
    return t.sigmoid(head(t, t.avg_pool_global(h)));
  }

  void collect(const std::string& p, nn::ParamMap<T>& m) {
    c1.collect(p + ".c1", m); c2.collect(p + ".c2", m); c3.collect(p + ".c3", m);
    head.collect(p + ".head", m);
  }
};

// Rectification module: one residual-in-residual dense block (three dense
// units) with zero-initialized fusion conv, so a fresh rectifier is the
// identity. `depth` repeats the block.
template <class T>
struct RectifierNet {
  int growth = 8, depth = 1;
  struct Block {
    nn::Conv2d<T> u1, u2, u3;
  };
  std::vector<Block> blocks;

  RectifierNet() = default;
  RectifierNet(int growth_, int depth_, Rng& rng) : growth(growth_), depth(depth_) {
    for (int i = 0; i < depth; ++i) {
      Block b;
      b.u1 = nn::Conv2d<T>(3, growth, 3, 1, 1, rng);
      b.u2 = nn::Conv2d<T>(3 + growth, growth, 3, 1, 1, rng);
      b.u3 = nn::Conv2d<T>(3 + 2 * growth, 3, 3, 1, 1, rng);
      b.u3.zero_init();
      blocks.push_back(std::move(b));
    }
  }

  typename Tape<T>::Var operator()(Tape<T>& t, typename Tape<T>::Var x) {
    auto y = x;
    for (auto& b : blocks) {
      auto c1 = t.lrelu(b.u1(t, y), T(0.2));
      auto c2 = t.lrelu(b.u2(t, t.concat_c(y, c1)), T(0.2));
      auto c3 = b.u3(t, t.concat_c(t.concat_c(y, c1), c2));
      y = t.add(y, t.scale(c3, T(0.2)));
    }
    return t.clamp(y, T(0), T(1));
  }

  void collect(const std::string& p, nn::ParamMap<T>& m) {
    for (size_t i = 0; i < blocks.size(); ++i) {
      std::string bp = p + ".block" + std::to_string(i);
      blocks[i].u1.collect(bp + ".u1", m);
      blocks[i].u2.collect(bp + ".u2", m);
      blocks[i].u3.collect(bp + ".u3", m);
    }
  }
};

// Fixed-weight perceptual distance: features from a small frozen random
// conv stack, globally unit-normalized per layer, squared-difference
// averaged. Zero for identical inputs by construction.
template <class T>
struct PerceptualMetric {
  Tensor<T> w1, b1_, w2, b2_;

  explicit PerceptualMetric(uint64_t seed = 7) {
    Rng rng(seed);
    w1 = Tensor<T>({8, 3, 3, 3});
    nn::kaiming_init(w1, 27, rng);
    b1_ = Tensor<T>::zeros({8});
    w2 = Tensor<T>({16, 8, 3, 3});
    nn::kaiming_init(w2, 72, rng);
    b2_ = Tensor<T>::zeros({16});
  }

  typename Tape<T>::Var distance(Tape<T>& t, typename Tape<T>::Var x,
                                 typename Tape<T>::Var y) const {
    auto feat = [&](typename Tape<T>::Var v, int level) {
      auto h = t.lrelu(t.conv2d(v, t.input(w1), t.input(b1_), 2, 1), T(0.2));
      if (level == 0) return h;
      return t.lrelu(t.conv2d(h, t.input(w2), t.input(b2_), 2, 1), T(0.2));
    };
    typename Tape<T>::Var total = t.input(Tensor<T>::scalar(T(0)), false);
    for (int level = 0; level < 2; ++level) {
      auto fx = feat(x, level);
      auto fy = feat(y, level);
      auto nx = t.div_by_scalar(fx, t.l2_norm(fx, T(1e-8)));
      auto ny = t.div_by_scalar(fy, t.l2_norm(fy, T(1e-8)));
      total = t.add(total, t.mean_all(t.square(t.sub(nx, ny))));
    }
    return total;
  }
};

// G + D_S + D_R + R with a monotone version counter; the unit every
// pretrain / fine-tune run operates on.
template <class T>
struct GeneratorBundle {
  GeneratorNet<T> g;
  DiscriminatorNet<T> d_s, d_r;
  RectifierNet<T> rect;
  int version = 0;
  int base = 8, rect_growth = 8, rect_depth = 1;
  uint64_t init_seed = 0;

  GeneratorBundle() = default;
  GeneratorBundle(int base_, int rect_growth_, int rect_depth_, uint64_t seed)
      : version(0), base(base_), rect_growth(rect_growth_), rect_depth(rect_depth_),
        init_seed(seed) {
    Rng rng(seed);
    g = GeneratorNet<T>(base_, rng);
    d_s = DiscriminatorNet<T>(base_, rng);
    d_r = DiscriminatorNet<T>(base_, rng);
    rect = RectifierNet<T>(rect_growth_, rect_depth_, rng);
  }

  nn::ParamMap<T> params_g() { nn::ParamMap<T> m; g.collect("g", m); return m; }
  nn::ParamMap<T> params_ds() { nn::ParamMap<T> m; d_s.collect("d_s", m); return m; }
  nn::ParamMap<T> params_dr() { nn::ParamMap<T> m; d_r.collect("d_r", m); return m; }
  nn::ParamMap<T> params_r() { nn::ParamMap<T> m; rect.collect("rect", m); return m; }
  nn::ParamMap<T> params_all() {
    nn::ParamMap<T> m;
    g.collect("g", m);
    d_s.collect("d_s", m);
    d_r.collect("d_r", m);
    rect.collect("rect", m);
    return m;
  }

  nlohmann::json arch() const {
    return {{"kind", "makeup_trigger_generator"},
            {"base", base},
            {"rect_growth", rect_growth},
            {"rect_depth", rect_depth},
            {"init_seed", init_seed}};
  }

  void save(const std::string& path) { save_checkpoint(path, params_all(), arch(), version); }

  static GeneratorBundle load(const std::string& path) {
    nlohmann::json hdr = peek_checkpoint_header(path);
    const auto& a = hdr.at("arch");
    GeneratorBundle b(a.at("base").get<int>(), a.at("rect_growth").get<int>(),
                      a.at("rect_depth").get<int>(), a.at("init_seed").get<uint64_t>());
    load_checkpoint<T>(path, b.params_all());
    b.version = hdr.at("bundle_version").get<int>();
    return b;
  }

  // Deterministic inference-time transfer G(s, r).
  Tensor<T> transfer(const Tensor<T>& s, const Tensor<T>& r) {
    if (s.shape != r.shape)
      throw std::invalid_argument("transfer: source/reference shape mismatch");
    Tape<T> t;
    auto out = g(t, t.input(s), t.input(r));
    return t.val(out);
  }
};

}  // namespace makeup
