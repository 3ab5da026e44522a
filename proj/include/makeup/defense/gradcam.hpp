#pragma once

#include <string>

#include "makeup/attack/target_model.hpp"

namespace makeup {

// Grad-CAM: channel weights = spatial mean of d(score)/d(feature map),
// heat = relu(sum_c w_c * map_c), bilinearly upsampled to the input size,
// min-max normalized (constant map -> all zeros).
template <class T>
inline Tensor<real> attention_map(TargetModel<T>& model, const Image& x, const std::string& layer,
                                  int class_idx) {
  Tape<T> t;
  typename TargetModel<T>::Record rec;
  auto logits = model.forward_logits(t, t.input(x.template cast<T>(), true), &rec);

  typename Tape<T>::Var fmap{};
  bool found = false;
  for (auto& [name, v] : rec)
    if (name == layer) {
      fmap = v;
      found = true;
    }
  if (!found) throw std::invalid_argument("attention_map: unknown layer " + layer);
  const auto& fv = t.val(fmap);
  if (fv.rank() != 3) throw std::invalid_argument("attention_map: layer is not spatial: " + layer);

  // Back-propagate the raw class score.
  const auto& lv = t.val(logits);
  if (class_idx < 0 || class_idx >= static_cast<int>(lv.numel()))
    throw std::invalid_argument("attention_map: class index out of range");
  Tensor<T> sel = Tensor<T>::zeros(lv.shape);
  sel[class_idx] = T(1);
  auto score = t.dot(logits, t.input(std::move(sel), false));
  t.backward(score);

  const Tensor<T>& g = t.grad(fmap);
  int c = fv.dim(0), fh = fv.dim(1), fw = fv.dim(2);
  int64_t hw = static_cast<int64_t>(fh) * fw;
  Tensor<double> heat({fh, fw});
  for (int ch = 0; ch < c; ++ch) {
    double wgt = 0;
    for (int64_t i = 0; i < hw; ++i) wgt += static_cast<double>(g.data[static_cast<size_t>(ch) * hw + i]);
    wgt /= static_cast<double>(hw);
    for (int64_t i = 0; i < hw; ++i)
      heat[i] += wgt * static_cast<double>(fv.data[static_cast<size_t>(ch) * hw + i]);
  }
  for (auto& v : heat.data) v = std::max(v, 0.0);

  int H = x.dim(1), W = x.dim(2);
  Tensor<double> up({H, W});
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx) {
      double sy = fh > 1 ? static_cast<double>(y) * (fh - 1) / (H - 1) : 0.0;
      double sx = fw > 1 ? static_cast<double>(xx) * (fw - 1) / (W - 1) : 0.0;
      int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
      int y1 = std::min(y0 + 1, fh - 1), x1 = std::min(x0 + 1, fw - 1);
      double fy = sy - y0, fx = sx - x0;
      up[static_cast<int64_t>(y) * W + xx] =
          (1 - fy) * ((1 - fx) * heat[static_cast<int64_t>(y0) * fw + x0] +
                      fx * heat[static_cast<int64_t>(y0) * fw + x1]) +
          fy * ((1 - fx) * heat[static_cast<int64_t>(y1) * fw + x0] +
                fx * heat[static_cast<int64_t>(y1) * fw + x1]);
    }

  double mn = up[0], mx = up[0];
  for (auto v : up.data) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  Tensor<real> out({H, W});
  if (mx > mn)
    for (int64_t i = 0; i < out.numel(); ++i)
      out[i] = static_cast<real>((up[i] - mn) / (mx - mn));
  return out;  // zeros when the map is constant
}

}  // namespace makeup
