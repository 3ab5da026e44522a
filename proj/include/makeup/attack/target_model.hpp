#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "makeup/core/nn.hpp"
#include "makeup/core/serialize.hpp"
#include "makeup/gan/models.hpp"

namespace makeup {

// Small residual CNN feature extractor M plus linear classifier C. Layer
// outputs are named conv1..conv7 for the defenses; channel masks let the
// pruning defenses zero individual feature maps.
template <class T>
struct TargetModel {
  int num_classes = 0, base = 8;
  nn::Conv2d<T> c1, c2, c3, c4, c5, c6, c7;
  nn::InstanceNorm<T> n1, n2, n3, n4, n5, n6, n7;
  nn::Linear<T> classifier;
  std::map<std::string, Tensor<T>> channel_masks;  // name -> [C] multiplier

  TargetModel() = default;
  TargetModel(int num_classes_, int base_, uint64_t seed)
      : num_classes(num_classes_), base(base_) {
    Rng rng(seed);
    int f = base, f2 = 2 * base, f4 = 4 * base, f8 = 8 * base;
    c1 = nn::Conv2d<T>(3, f, 3, 1, 1, rng);   n1 = nn::InstanceNorm<T>(f);
    c2 = nn::Conv2d<T>(f, f2, 3, 2, 1, rng);  n2 = nn::InstanceNorm<T>(f2);
    c3 = nn::Conv2d<T>(f2, f2, 3, 1, 1, rng); n3 = nn::InstanceNorm<T>(f2);
    c4 = nn::Conv2d<T>(f2, f4, 3, 2, 1, rng); n4 = nn::InstanceNorm<T>(f4);
    c5 = nn::Conv2d<T>(f4, f4, 3, 1, 1, rng); n5 = nn::InstanceNorm<T>(f4);
    c6 = nn::Conv2d<T>(f4, f8, 3, 2, 1, rng); n6 = nn::InstanceNorm<T>(f8);
    c7 = nn::Conv2d<T>(f8, f8, 3, 1, 1, rng); n7 = nn::InstanceNorm<T>(f8);
    classifier = nn::Linear<T>(f8, num_classes, rng);
    for (auto& [name, c] : conv_names())
      channel_masks[name] = Tensor<T>::full({c->w.value.dim(0)}, T(1));
  }

  std::vector<std::pair<std::string, nn::Conv2d<T>*>> conv_names() {
    return {{"conv1", &c1}, {"conv2", &c2}, {"conv3", &c3}, {"conv4", &c4},
            {"conv5", &c5}, {"conv6", &c6}, {"conv7", &c7}};
  }

  int embed_dim() const { return 8 * base; }

  using Var = typename Tape<T>::Var;
  using Record = std::vector<std::pair<std::string, Var>>;

  Var forward_features(Tape<T>& t, Var x, Record* rec = nullptr) {
    auto masked = [&](Var h, const std::string& name) {
      auto it = channel_masks.find(name);
      Var out = it != channel_masks.end() ? t.cb_mul(h, t.input(it->second)) : h;
      if (rec) rec->emplace_back(name, out);
      return out;
    };
    auto h1 = masked(t.relu(n1(t, c1(t, x))), "conv1");
    auto h2 = masked(t.relu(n2(t, c2(t, h1))), "conv2");
    auto h3 = masked(t.relu(t.add(n3(t, c3(t, h2)), h2)), "conv3");
    auto h4 = masked(t.relu(n4(t, c4(t, h3))), "conv4");
    auto h5 = masked(t.relu(t.add(n5(t, c5(t, h4)), h4)), "conv5");
    auto h6 = masked(t.relu(n6(t, c6(t, h5))), "conv6");
    auto h7 = masked(t.relu(t.add(n7(t, c7(t, h6)), h6)), "conv7");
    auto emb = t.avg_pool_global(h7);
    if (rec) rec->emplace_back("embed", emb);
    return emb;
  }

  Var forward_logits(Tape<T>& t, Var x, Record* rec = nullptr) {
    return classifier(t, forward_features(t, x, rec));
  }

  nn::ParamMap<T> params_features() {
    nn::ParamMap<T> m;
    c1.collect("c1", m); n1.collect("n1", m); c2.collect("c2", m); n2.collect("n2", m);
    c3.collect("c3", m); n3.collect("n3", m); c4.collect("c4", m); n4.collect("n4", m);
    c5.collect("c5", m); n5.collect("n5", m); c6.collect("c6", m); n6.collect("n6", m);
    c7.collect("c7", m); n7.collect("n7", m);
    return m;
  }
  nn::ParamMap<T> params_all() {
    nn::ParamMap<T> m = params_features();
    classifier.collect("classifier", m);
    return m;
  }

  nlohmann::json arch() const {
    return {{"kind", "target_cnn"}, {"num_classes", num_classes}, {"base", base}};
  }

  void save(const std::string& path, int version = 0) {
    save_checkpoint(path, params_all(), arch(), version);
  }
  static TargetModel load(const std::string& path) {
    nlohmann::json hdr = peek_checkpoint_header(path);
    const auto& a = hdr.at("arch");
    TargetModel m(a.at("num_classes").get<int>(), a.at("base").get<int>(), 0);
    load_checkpoint<T>(path, m.params_all());
    return m;
  }

  std::vector<T> logits(const Tensor<T>& img) {
    Tape<T> t;
    auto out = forward_logits(t, t.input(img));
    return t.val(out).data;
  }

  std::vector<double> predict_probs(const Tensor<T>& img) {
    auto lg = logits(img);
    double mx = lg[0];
    for (auto v : lg) mx = std::max(mx, static_cast<double>(v));
    double z = 0;
    std::vector<double> p(lg.size());
    for (size_t i = 0; i < lg.size(); ++i) {
      p[i] = std::exp(static_cast<double>(lg[i]) - mx);
      z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
  }

  int predict(const Tensor<T>& img) {
    auto lg = logits(img);
    int best = 0;
    for (size_t i = 1; i < lg.size(); ++i)
      if (lg[i] > lg[static_cast<size_t>(best)]) best = static_cast<int>(i);
    return best;
  }

  Tensor<T> features(const Tensor<T>& img) {
    Tape<T> t;
    auto out = forward_features(t, t.input(img));
    return t.val(out);
  }

  // Black-box view of M for generator fine-tuning: a frozen copy, so the
  // live model's parameters are never touched.
  FeatureFn<T> frozen_feature_fn() {
    auto frozen = std::make_shared<TargetModel<T>>(*this);
    return [frozen](Tape<T>& t, typename Tape<T>::Var x) {
      return frozen->forward_features(t, x);
    };
  }

  uint64_t feature_param_hash() { return nn::param_hash(params_features()); }
};

}  // namespace makeup
