#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "makeup/poison/nmi.hpp"

namespace makeup {

// Mean SSIM on luma, 11x11 Gaussian window (sigma 1.5), standard
// constants for unit dynamic range. Only used by the selection-mode
// ablation harness.
inline double ssim(const Image& a, const Image& b) {
  if (a.shape != b.shape) throw std::invalid_argument("SSIM: image shape mismatch");
  int h = a.dim(1), w = a.dim(2);
  auto va = reduce_channel(a, ChannelMode::Luma);
  auto vb = reduce_channel(b, ChannelMode::Luma);

  constexpr int win = 11, half = 5;
  constexpr double sigma = 1.5;
  double kernel[win][win];
  double ksum = 0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      double dy = i - half, dx = j - half;
      kernel[i][j] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      ksum += kernel[i][j];
    }
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) kernel[i][j] /= ksum;

  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  int count = 0;
  for (int y = half; y < h - half; ++y)
    for (int x = half; x < w - half; ++x) {
      double ma = 0, mb = 0, sa = 0, sb = 0, sab = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          size_t idx = static_cast<size_t>(y + i - half) * w + (x + j - half);
          double k = kernel[i][j];
          ma += k * va[idx];
          mb += k * vb[idx];
        }
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          size_t idx = static_cast<size_t>(y + i - half) * w + (x + j - half);
          double k = kernel[i][j];
          sa += k * (va[idx] - ma) * (va[idx] - ma);
          sb += k * (vb[idx] - mb) * (vb[idx] - mb);
          sab += k * (va[idx] - ma) * (vb[idx] - mb);
        }
      total += ((2 * ma * mb + c1) * (2 * sab + c2)) /
               ((ma * ma + mb * mb + c1) * (sa + sb + c2));
      ++count;
    }
  return count ? total / count : 0.0;
}

}  // namespace makeup
