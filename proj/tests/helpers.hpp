#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "makeup/makeup.hpp"

namespace testutil {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("makeup_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

// Central finite differences of `loss_fn` (re-runs the full forward pass)
// against analytic gradients accumulated into `params`. Returns the worst
// relative error over all coordinates with non-negligible gradient.
// Coordinates are subsampled (deterministically) when a tensor is large;
// a full sweep over every weight of every network would take minutes on
// one core without changing what the test demonstrates.
inline double gradcheck(const makeup::nn::ParamMap<double>& params,
                        const std::function<double()>& loss_fn,
                        const std::function<void()>& backward_fn, double eps = 1e-5,
                        int64_t max_coords_per_tensor = 12) {
  backward_fn();
  std::vector<makeup::Tensor<double>> analytic;
  for (auto& [name, p] : params) analytic.push_back(p->grad);

  makeup::Rng pick(0xfeedu);
  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    makeup::Param<double>& p = *params[pi].second;
    std::vector<int64_t> coords;
    if (p.value.numel() <= max_coords_per_tensor) {
      for (int64_t i = 0; i < p.value.numel(); ++i) coords.push_back(i);
    } else {
      for (int64_t k = 0; k < max_coords_per_tensor; ++k)
        coords.push_back(pick.randint(p.value.numel()));
    }
    for (int64_t i : coords) {
      double saved = p.value[i];
      p.value[i] = saved + eps;
      double lp = loss_fn();
      p.value[i] = saved - eps;
      double lm = loss_fn();
      p.value[i] = saved;
      double fd = (lp - lm) / (2 * eps);
      double an = analytic[pi][i];
      double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

inline makeup::Tensor<double> random_image_d(int res, makeup::Rng& rng, double lo = 0.05,
                                             double hi = 0.95) {
  makeup::Tensor<double> t({3, res, res});
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

inline makeup::Image random_image(int res, makeup::Rng& rng) {
  makeup::Image t({3, res, res});
  for (auto& v : t.data) v = static_cast<makeup::real>(rng.uniform(0.0, 1.0));
  return t;
}

inline makeup::RegionMaskSet full_coverage_masks(int res) {
  // Quadrant layout so every region is nonempty.
  std::vector<unsigned char> codes(static_cast<size_t>(res) * res, 1);
  for (int y = 0; y < res / 2; ++y)
    for (int x = 0; x < res / 2; ++x) codes[static_cast<size_t>(y) * res + x] = 2;
  for (int y = 0; y < res / 2; ++y)
    for (int x = res / 2; x < res; ++x) codes[static_cast<size_t>(y) * res + x] = 3;
  for (int y = res / 2; y < res; ++y)
    for (int x = 0; x < res / 2; ++x) codes[static_cast<size_t>(y) * res + x] = 4;
  return makeup::masks_from_codes(codes, res, res);
}

}  // namespace testutil
