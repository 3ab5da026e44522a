#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "makeup/core/image_io.hpp"

namespace makeup {

struct Mask {
  int h = 0, w = 0;
  std::vector<uint8_t> on;  // row-major 0/1

  Mask() = default;
  Mask(int h_, int w_) : h(h_), w(w_), on(static_cast<size_t>(h_) * w_, 0) {}
  uint8_t& at(int y, int x) { return on[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return on[static_cast<size_t>(y) * w + x]; }
  size_t count() const {
    size_t n = 0;
    for (auto v : on) n += v;
    return n;
  }
  bool empty_region() const { return count() == 0; }
};

struct RegionMaskSet {
  Mask lips, skin, eye_left, eye_right;

  const Mask& region(int i) const {
    switch (i) {
      case 0: return lips;
      case 1: return skin;
      case 2: return eye_left;
      default: return eye_right;
    }
  }
  static const char* region_name(int i) {
    switch (i) {
      case 0: return "lips";
      case 1: return "skin";
      case 2: return "eye_left";
      default: return "eye_right";
    }
  }
};

using Landmarks = std::vector<std::pair<double, double>>;  // 68 (x,y) points

// Mask file codes: 0 none, 1 skin, 2 lips, 3 eye-left, 4 eye-right.
inline RegionMaskSet masks_from_codes(const std::vector<unsigned char>& codes, int w, int h) {
  RegionMaskSet m;
  m.lips = Mask(h, w);
  m.skin = Mask(h, w);
  m.eye_left = Mask(h, w);
  m.eye_right = Mask(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      switch (codes[static_cast<size_t>(y) * w + x]) {
        case 1: m.skin.at(y, x) = 1; break;
        case 2: m.lips.at(y, x) = 1; break;
        case 3: m.eye_left.at(y, x) = 1; break;
        case 4: m.eye_right.at(y, x) = 1; break;
        default: break;
      }
    }
  return m;
}

inline std::vector<unsigned char> masks_to_codes(const RegionMaskSet& m) {
  int h = m.skin.h, w = m.skin.w;
  std::vector<unsigned char> codes(static_cast<size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      size_t i = static_cast<size_t>(y) * w + x;
      if (m.lips.at(y, x)) codes[i] = 2;
      else if (m.eye_left.at(y, x)) codes[i] = 3;
      else if (m.eye_right.at(y, x)) codes[i] = 4;
      else if (m.skin.at(y, x)) codes[i] = 1;
    }
  return codes;
}

namespace detail {

using Pt = std::pair<double, double>;

inline double cross(const Pt& o, const Pt& a, const Pt& b) {
  return (a.first - o.first) * (b.second - o.second) -
         (a.second - o.second) * (b.first - o.first);
}

// Andrew monotone chain, CCW hull.
inline std::vector<Pt> convex_hull(std::vector<Pt> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  int n = static_cast<int>(pts.size());
  if (n < 3) return pts;
  std::vector<Pt> hull(static_cast<size_t>(2 * n));
  int k = 0;
  for (int i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[static_cast<size_t>(k++)] = pts[static_cast<size_t>(i)];
  }
  int lower = k + 1;
  for (int i = n - 2; i >= 0; --i) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[static_cast<size_t>(k++)] = pts[static_cast<size_t>(i)];
  }
  hull.resize(static_cast<size_t>(k - 1));
  return hull;
}

inline bool point_in_poly(const std::vector<Pt>& poly, double px, double py) {
  bool in = false;
  int n = static_cast<int>(poly.size());
  for (int i = 0, j = n - 1; i < n; j = i++) {
    double xi = poly[static_cast<size_t>(i)].first, yi = poly[static_cast<size_t>(i)].second;
    double xj = poly[static_cast<size_t>(j)].first, yj = poly[static_cast<size_t>(j)].second;
    bool intersect = ((yi > py) != (yj > py)) &&
                     (px < (xj - xi) * (py - yi) / (yj - yi) + xi);
    if (intersect) in = !in;
  }
  return in;
}

inline double dist_to_segment(double px, double py, const Pt& a, const Pt& b) {
  double dx = b.first - a.first, dy = b.second - a.second;
  double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - a.first) * dx + (py - a.second) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  double cx = a.first + t * dx, cy = a.second + t * dy;
  return std::hypot(px - cx, py - cy);
}

inline double dist_to_poly(const std::vector<Pt>& poly, double px, double py) {
  double d = std::numeric_limits<double>::max();
  int n = static_cast<int>(poly.size());
  for (int i = 0, j = n - 1; i < n; j = i++)
    d = std::min(d, dist_to_segment(px, py, poly[static_cast<size_t>(j)],
                                    poly[static_cast<size_t>(i)]));
  return d;
}

inline Mask rasterize(const std::vector<Pt>& hull, int h, int w, double dilate = 0.0) {
  Mask m(h, w);
  if (hull.size() < 3) return m;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double px = x + 0.5, py = y + 0.5;
      if (point_in_poly(hull, px, py) || (dilate > 0 && dist_to_poly(hull, px, py) <= dilate))
        m.at(y, x) = 1;
    }
  return m;
}

inline Pt centroid(const std::vector<Pt>& pts) {
  double sx = 0, sy = 0;
  for (const auto& p : pts) {
    sx += p.first;
    sy += p.second;
  }
  double n = static_cast<double>(pts.size());
  return {sx / n, sy / n};
}

}  // namespace detail

// Geometric 68-landmark parser (iBUG indexing): lips = hull of mouth
// points 48-67; eye-shadow = eye hull (36-41 / 42-47) dilated by 15% of
// the inter-ocular distance, minus the eye hull itself; skin = face hull
// (jaw 0-16 + brows 17-26) minus the other regions. Precedence where
// candidates overlap: lips > eye regions > skin.
inline RegionMaskSet parse_regions_from_landmarks(const Landmarks& lm, int h, int w) {
  using namespace detail;
  if (lm.size() != 68) throw std::invalid_argument("expected 68 landmarks");
  auto slice = [&lm](int a, int b) {
    return std::vector<Pt>(lm.begin() + a, lm.begin() + b + 1);
  };
  auto lips_hull = convex_hull(slice(48, 67));
  auto eye_l_pts = slice(36, 41);
  auto eye_r_pts = slice(42, 47);
  auto eye_l_hull = convex_hull(eye_l_pts);
  auto eye_r_hull = convex_hull(eye_r_pts);
  std::vector<Pt> face_pts = slice(0, 16);
  auto brows = slice(17, 26);
  face_pts.insert(face_pts.end(), brows.begin(), brows.end());
  auto face_hull = convex_hull(face_pts);

  Pt cl = centroid(eye_l_pts), cr = centroid(eye_r_pts);
  double iod = std::hypot(cl.first - cr.first, cl.second - cr.second);
  double dil = 0.15 * iod;

  Mask lips = rasterize(lips_hull, h, w);
  Mask eye_l_core = rasterize(eye_l_hull, h, w);
  Mask eye_r_core = rasterize(eye_r_hull, h, w);
  Mask eye_l_dil = rasterize(eye_l_hull, h, w, dil);
  Mask eye_r_dil = rasterize(eye_r_hull, h, w, dil);
  Mask face = rasterize(face_hull, h, w);

  RegionMaskSet out;
  out.lips = Mask(h, w);
  out.skin = Mask(h, w);
  out.eye_left = Mask(h, w);
  out.eye_right = Mask(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (lips.at(y, x)) {
        out.lips.at(y, x) = 1;
      } else if (eye_l_dil.at(y, x) && !eye_l_core.at(y, x)) {
        out.eye_left.at(y, x) = 1;
      } else if (eye_r_dil.at(y, x) && !eye_r_core.at(y, x)) {
        out.eye_right.at(y, x) = 1;
      } else if (face.at(y, x) && !eye_l_core.at(y, x) && !eye_r_core.at(y, x)) {
        out.skin.at(y, x) = 1;
      }
    }
  return out;
}

inline std::string mask_path_for(const std::string& image_path) {
  return image_path + ".mask.png";
}

// Primary path: precomputed ".mask.png" next to the image. Fallback:
// geometric landmark parser. With neither, a region-parse error.
inline RegionMaskSet parse_regions(const std::string& image_path, int h, int w,
                                   const std::optional<Landmarks>& landmarks = std::nullopt) {
  std::string mp = mask_path_for(image_path);
  if (std::filesystem::exists(mp)) {
    int mw = 0, mh = 0;
    auto codes = read_mask_png(mp, mw, mh);
    if (mw != w || mh != h)
      throw std::runtime_error("mask size mismatch for " + mp);
    return masks_from_codes(codes, mw, mh);
  }
  if (landmarks) return parse_regions_from_landmarks(*landmarks, h, w);
  throw std::runtime_error("no mask file and no landmarks for " + image_path);
}

}  // namespace makeup
