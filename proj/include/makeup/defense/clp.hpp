#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <fstream>
#include <string>
#include <vector>

#include "makeup/attack/target_model.hpp"

namespace makeup {

struct ClpLayerStats {
  std::string layer;
  std::vector<double> uclc;  // per output channel
  double mu = 0, sigma = 0, theta = 0;
  std::vector<int> pruned;
};

struct ClpStats {
  double u = 3.0;
  std::vector<ClpLayerStats> layers;

  void write_csv(const std::string& path) const {
    std::ofstream f(path);
    f << "layer,channel,uclc,theta,pruned\n";
    for (const auto& l : layers)
      for (size_t c = 0; c < l.uclc.size(); ++c) {
        bool pr = std::find(l.pruned.begin(), l.pruned.end(), static_cast<int>(c)) != l.pruned.end();
        f << l.layer << ',' << c << ',' << l.uclc[c] << ',' << l.theta << ',' << (pr ? 1 : 0)
          << "\n";
      }
  }
};

// Channel Lipschitz upper bound: largest singular value of the channel's
// kernel flattened to [Cin, k*k].
template <class T>
inline double channel_uclc(const Tensor<T>& w, int out_channel) {
  int cin = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  Eigen::MatrixXd m(cin, kh * kw);
  int64_t per_out = static_cast<int64_t>(cin) * kh * kw;
  const T* base = w.data.data() + static_cast<int64_t>(out_channel) * per_out;
  for (int i = 0; i < cin; ++i)
    for (int j = 0; j < kh * kw; ++j)
      m(i, j) = static_cast<double>(base[static_cast<int64_t>(i) * kh * kw + j]);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

template <class T>
struct ClpResult {
  TargetModel<T> model;
  ClpStats stats;
};

// Data-free channel pruning: per layer, zero every channel whose UCLC
// exceeds theta = mu + u*sigma over that layer's channels.
template <class T>
inline ClpResult<T> clp_prune(const TargetModel<T>& model_in, double u = 3.0) {
  ClpResult<T> out{model_in, {}};
  out.stats.u = u;
  for (auto& [name, conv] : out.model.conv_names()) {
    ClpLayerStats ls;
    ls.layer = name;
    int cout = conv->w.value.dim(0);
    for (int c = 0; c < cout; ++c) ls.uclc.push_back(channel_uclc(conv->w.value, c));
    double mu = 0;
    for (double v : ls.uclc) mu += v;
    mu /= cout;
    double var = 0;
    for (double v : ls.uclc) var += (v - mu) * (v - mu);
    double sigma = std::sqrt(var / cout);
    ls.mu = mu;
    ls.sigma = sigma;
    ls.theta = mu + u * sigma;
    Tensor<T>& mask = out.model.channel_masks.at(name);
    for (int c = 0; c < cout; ++c)
      if (ls.uclc[static_cast<size_t>(c)] > ls.theta) {
        mask[c] = T(0);
        ls.pruned.push_back(c);
      }
    out.stats.layers.push_back(std::move(ls));
  }
  return out;
}

}  // namespace makeup
