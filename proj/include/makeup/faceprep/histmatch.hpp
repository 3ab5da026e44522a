#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "makeup/core/image_io.hpp"
#include "makeup/faceprep/regions.hpp"

namespace makeup {

struct PseudoGroundTruth {
  Image pixels;
  std::string source_id, reference_id;
};

// Monotone rank mapping per channel: the k-th smallest source pixel under
// mask_s takes the value of the reference-region quantile at the same
// relative rank. Ties broken by raster order (stable sort), so matching a
// region against itself is the identity.
inline void histogram_match_region_inplace(Image& out, const Image& src, const Image& ref,
                                           const Mask& mask_s, const Mask& mask_r) {
  if (mask_s.empty_region() || mask_r.empty_region())
    throw std::runtime_error("histogram match on empty region");
  int h = src.dim(1), w = src.dim(2);
  std::vector<int64_t> sidx;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask_s.at(y, x)) sidx.push_back(static_cast<int64_t>(y) * w + x);
  int64_t ns = static_cast<int64_t>(sidx.size());
  int64_t nr = 0;
  for (int y = 0; y < ref.dim(1); ++y)
    for (int x = 0; x < ref.dim(2); ++x)
      if (mask_r.at(y, x)) ++nr;

  for (int c = 0; c < 3; ++c) {
    const real* splane = src.data.data() + static_cast<size_t>(c) * h * w;
    const real* rplane = ref.data.data() + static_cast<size_t>(c) * ref.dim(1) * ref.dim(2);
    real* oplane = out.data.data() + static_cast<size_t>(c) * h * w;

    std::vector<int64_t> order = sidx;  // indices sorted by source value, raster-stable
    std::stable_sort(order.begin(), order.end(),
                     [splane](int64_t a, int64_t b) { return splane[a] < splane[b]; });

    std::vector<real> sorted_ref;
    sorted_ref.reserve(static_cast<size_t>(nr));
    for (int y = 0; y < ref.dim(1); ++y)
      for (int x = 0; x < ref.dim(2); ++x)
        if (mask_r.at(y, x))
          sorted_ref.push_back(rplane[static_cast<size_t>(y) * ref.dim(2) + x]);
    std::sort(sorted_ref.begin(), sorted_ref.end());

    for (int64_t k = 0; k < ns; ++k) {
      int64_t rk = k * nr / ns;
      oplane[order[static_cast<size_t>(k)]] = sorted_ref[static_cast<size_t>(rk)];
    }
  }
}

inline Image histogram_match_region(const Image& src, const Image& ref, const Mask& mask_s,
                                    const Mask& mask_r) {
  Image out = src;
  histogram_match_region_inplace(out, src, ref, mask_s, mask_r);
  return out;
}

// HM(s,r): region-to-corresponding-region histogram match composed over
// lips, skin, and the two eye-shadow regions; everything else is s.
inline PseudoGroundTruth compose_hm(const Image& s, const Image& r, const RegionMaskSet& masks_s,
                                    const RegionMaskSet& masks_r,
                                    const std::string& source_id = "",
                                    const std::string& reference_id = "") {
  PseudoGroundTruth out;
  out.pixels = s;
  out.source_id = source_id;
  out.reference_id = reference_id;
  for (int i = 0; i < 4; ++i) {
    try {
      histogram_match_region_inplace(out.pixels, s, r, masks_s.region(i), masks_r.region(i));
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("compose_hm failed on region ") +
                               RegionMaskSet::region_name(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace makeup
