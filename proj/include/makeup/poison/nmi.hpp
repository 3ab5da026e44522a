#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "makeup/core/image_io.hpp"

namespace makeup {

enum class ChannelMode { Luma, MeanRgb };

struct NmiConfig {
  int bins = 64;
  ChannelMode channel_mode = ChannelMode::Luma;
};

// ITU-R 601 luma weights.
inline std::vector<double> reduce_channel(const Image& img, ChannelMode mode) {
  int h = img.dim(1), w = img.dim(2);
  size_t plane = static_cast<size_t>(h) * w;
  std::vector<double> out(plane);
  for (size_t i = 0; i < plane; ++i) {
    double r = img.data[i], g = img.data[plane + i], b = img.data[2 * plane + i];
    out[i] = mode == ChannelMode::Luma ? 0.299 * r + 0.587 * g + 0.114 * b : (r + g + b) / 3.0;
  }
  return out;
}

inline int intensity_bin(double v, int bins) {
  int b = static_cast<int>(v * bins);
  return b < 0 ? 0 : (b >= bins ? bins - 1 : b);
}

// NMI = 2 I(A;B) / (H(A)+H(B)) over the joint intensity histogram;
// returns 0 when both marginal entropies vanish (constant images).
inline double normalized_mutual_information(const Image& a, const Image& b,
                                            const NmiConfig& cfg = {}) {
  if (a.shape != b.shape) throw std::invalid_argument("NMI: image shape mismatch");
  if (cfg.bins < 2) throw std::invalid_argument("NMI: bins must be >= 2");
  auto va = reduce_channel(a, cfg.channel_mode);
  auto vb = reduce_channel(b, cfg.channel_mode);
  int bins = cfg.bins;
  std::vector<double> joint(static_cast<size_t>(bins) * bins, 0.0);
  double n = static_cast<double>(va.size());
  for (size_t i = 0; i < va.size(); ++i)
    joint[static_cast<size_t>(intensity_bin(va[i], bins)) * bins + intensity_bin(vb[i], bins)] +=
        1.0;
  std::vector<double> pa(static_cast<size_t>(bins), 0.0), pb(static_cast<size_t>(bins), 0.0);
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j) {
      double p = joint[static_cast<size_t>(i) * bins + j] / n;
      pa[static_cast<size_t>(i)] += p;
      pb[static_cast<size_t>(j)] += p;
    }
  double ha = 0, hb = 0, mi = 0;
  for (int i = 0; i < bins; ++i) {
    if (pa[static_cast<size_t>(i)] > 0) ha -= pa[static_cast<size_t>(i)] * std::log(pa[static_cast<size_t>(i)]);
    if (pb[static_cast<size_t>(i)] > 0) hb -= pb[static_cast<size_t>(i)] * std::log(pb[static_cast<size_t>(i)]);
  }
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j) {
      double p = joint[static_cast<size_t>(i) * bins + j] / n;
      if (p > 0) mi += p * std::log(p / (pa[static_cast<size_t>(i)] * pb[static_cast<size_t>(j)]));
    }
  double denom = ha + hb;
  if (denom <= 0) return 0.0;
  return 2.0 * mi / denom;
}

}  // namespace makeup
