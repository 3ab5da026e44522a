#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "helpers.hpp"

using namespace makeup;
using testutil::TempDir;

namespace {

// Empirical CDF of the masked region at value v (fraction of pixels <= v).
double region_cdf(const Image& img, const Mask& m, int c, real v) {
  int h = img.dim(1), w = img.dim(2);
  int64_t n = 0, le = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (m.at(y, x)) {
        ++n;
        if (img.at(c, y, x) <= v) ++le;
      }
  return static_cast<double>(le) / static_cast<double>(n);
}

std::vector<real> region_values(const Image& img, const Mask& m, int c) {
  std::vector<real> out;
  for (int y = 0; y < img.dim(1); ++y)
    for (int x = 0; x < img.dim(2); ++x)
      if (m.at(y, x)) out.push_back(img.at(c, y, x));
  return out;
}

}  // namespace

TEST_CASE("masks_from_codes / masks_to_codes round trip") {
  std::vector<unsigned char> codes(64);
  for (size_t i = 0; i < codes.size(); ++i) codes[i] = static_cast<unsigned char>(i % 5);
  RegionMaskSet m = masks_from_codes(codes, 8, 8);
  CHECK(masks_to_codes(m) == codes);
  CHECK(m.lips.count() + m.skin.count() + m.eye_left.count() + m.eye_right.count() ==
        64 - 13);  // 13 zeros in 0..4 cycle over 64 cells
}

TEST_CASE("parse_regions prefers the mask file") {
  TempDir td("regions");
  Rng rng(4);
  Image img = testutil::random_image(8, rng);
  save_image(td.sub("a.png"), img);
  std::vector<unsigned char> codes(64, 1);
  codes[0] = 2;
  codes[1] = 3;
  codes[2] = 4;
  write_mask_png(mask_path_for(td.sub("a.png")), codes, 8, 8);
  RegionMaskSet m = parse_regions(td.sub("a.png"), 8, 8);
  CHECK(m.lips.at(0, 0) == 1);
  CHECK(m.eye_left.at(0, 1) == 1);
  CHECK(m.eye_right.at(0, 2) == 1);
  CHECK(m.skin.count() == 61);
  // Size mismatch is an error, not a silent resize.
  CHECK_THROWS(parse_regions(td.sub("a.png"), 16, 16));
  // No mask file and no landmarks: error mentioning the image.
  try {
    parse_regions(td.sub("missing.png"), 8, 8);
    CHECK(false);
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("missing.png") != std::string::npos);
  }
}

TEST_CASE("landmark fallback produces sane disjoint regions") {
  // Synthetic 68-point face in a 64x64 frame.
  Landmarks lm(68);
  auto set = [&](int i, double x, double y) { lm[static_cast<size_t>(i)] = {x, y}; };
  // Jaw 0-16: half-ellipse.
  for (int i = 0; i <= 16; ++i) {
    double t = M_PI * i / 16.0;
    set(i, 32 - 24 * std::cos(t), 20 + 36 * std::sin(t));
  }
  // Brows 17-26.
  for (int i = 0; i < 5; ++i) set(17 + i, 12 + 4 * i, 16);
  for (int i = 0; i < 5; ++i) set(22 + i, 36 + 4 * i, 16);
  // Nose 27-35 (unused by the parser but indices must exist).
  for (int i = 0; i < 9; ++i) set(27 + i, 32, 22 + i);
  // Eyes 36-41 / 42-47.
  double exl = 20, exr = 44, ey = 24;
  for (int k = 0; k < 6; ++k) {
    double a = 2 * M_PI * k / 6.0;
    set(36 + k, exl + 4 * std::cos(a), ey + 2 * std::sin(a));
    set(42 + k, exr + 4 * std::cos(a), ey + 2 * std::sin(a));
  }
  // Mouth 48-67.
  for (int k = 0; k < 20; ++k) {
    double a = 2 * M_PI * k / 20.0;
    set(48 + k, 32 + 7 * std::cos(a), 44 + 3 * std::sin(a));
  }

  RegionMaskSet m = parse_regions_from_landmarks(lm, 64, 64);
  CHECK(m.lips.count() > 0);
  CHECK(m.eye_left.count() > 0);
  CHECK(m.eye_right.count() > 0);
  CHECK(m.skin.count() > m.lips.count());
  // Regions are pairwise disjoint.
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      int on = m.lips.at(y, x) + m.skin.at(y, x) + m.eye_left.at(y, x) + m.eye_right.at(y, x);
      CHECK(on <= 1);
    }
  // Eye-shadow rings exclude the eye interior: the eye centroids are not
  // in any region (carved out of skin too).
  CHECK(m.eye_left.at(24, 20) == 0);
  CHECK(m.skin.at(24, 20) == 0);
  // Lips sit inside the mouth ellipse.
  CHECK(m.lips.at(44, 32) == 1);

  Landmarks bad(10);
  CHECK_THROWS(parse_regions_from_landmarks(bad, 64, 64));
}

TEST_CASE("HM(s,s) is the identity") {
  Rng rng(21);
  Image s = testutil::random_image(32, rng);
  RegionMaskSet masks = testutil::full_coverage_masks(32);
  PseudoGroundTruth g = compose_hm(s, s, masks, masks, "sid", "rid");
  CHECK(g.source_id == "sid");
  CHECK(g.reference_id == "rid");
  for (size_t i = 0; i < s.data.size(); ++i) CHECK(g.pixels.data[i] == s.data[i]);
}

TEST_CASE("matched region attains the reference distribution (CDF sup-norm)") {
  // 64x64 quadrants: every region has 1024 >= 512 pixels, comfortably
  // above the resolution at which the rank map's quantile snap stays
  // under one 8-bit step.
  Rng rng(22);
  Image s = testutil::random_image(64, rng);
  Image r = testutil::random_image(64, rng);
  RegionMaskSet masks = testutil::full_coverage_masks(64);
  PseudoGroundTruth g = compose_hm(s, r, masks, masks);
  for (int region = 0; region < 4; ++region) {
    const Mask& m = masks.region(region);
    for (int c = 0; c < 3; ++c) {
      // Exact multiset claim: output values are a subset of reference
      // values, with matched empirical CDFs at every output value.
      auto ref_vals = region_values(r, m, c);
      std::sort(ref_vals.begin(), ref_vals.end());
      auto out_vals = region_values(g.pixels, m, c);
      double sup = 0;
      for (real v : out_vals) {
        CHECK(std::binary_search(ref_vals.begin(), ref_vals.end(), v));
        sup = std::max(sup, std::abs(region_cdf(g.pixels, m, c, v) - region_cdf(r, m, c, v)));
      }
      CHECK(sup <= 1.0 / 256.0);
    }
  }
}

TEST_CASE("histogram match is monotone in source ranks") {
  Rng rng(23);
  Image s = testutil::random_image(16, rng);
  Image r = testutil::random_image(16, rng);
  Mask m(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) m.at(y, x) = 1;
  Image out = histogram_match_region(s, r, m, m);
  for (int c = 0; c < 3; ++c) {
    // Sorting source pixels must sort the outputs identically.
    std::vector<std::pair<real, real>> pairs;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) pairs.push_back({s.at(c, y, x), out.at(c, y, x)});
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (size_t i = 1; i < pairs.size(); ++i) CHECK(pairs[i].second >= pairs[i - 1].second);
  }
}

TEST_CASE("histogram match leaves pixels outside the mask untouched") {
  Rng rng(24);
  Image s = testutil::random_image(16, rng);
  Image r = testutil::random_image(16, rng);
  Mask m(16, 16);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) m.at(y, x) = 1;
  Image out = histogram_match_region(s, r, m, m);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        if (!m.at(y, x)) CHECK(out.at(c, y, x) == s.at(c, y, x));
}

TEST_CASE("empty regions are errors, wrapped with the region name by compose_hm") {
  Rng rng(25);
  Image s = testutil::random_image(8, rng);
  Mask empty(8, 8), full(8, 8);
  for (auto& v : full.on) v = 1;
  CHECK_THROWS_WITH_AS(histogram_match_region(s, s, empty, full),
                       "histogram match on empty region", std::runtime_error);

  RegionMaskSet ms = testutil::full_coverage_masks(8);
  RegionMaskSet mr = ms;
  mr.eye_left = Mask(8, 8);  // empty on the reference side
  try {
    compose_hm(s, s, ms, mr);
    CHECK(false);
  } catch (const std::exception& e) {
    std::string w = e.what();
    CHECK(w.find("compose_hm failed on region eye_left") != std::string::npos);
    CHECK(w.find("empty region") != std::string::npos);
  }
}

TEST_CASE("synthetic corpus renders the documented mask codes") {
  TempDir td("synth");
  write_synthetic_dataset(td.sub("r"), 2, 2, 32, 7, 7, /*makeup=*/true);
  Dataset d = load_dataset(td.sub("r"), 32);
  REQUIRE(d.samples.size() == 4);
  for (const auto& smp : d.samples) {
    RegionMaskSet m = parse_regions(td.sub("r") + "/" + smp.sample_id, 32, 32);
    CHECK(m.lips.count() > 0);
    CHECK(m.skin.count() > 0);
    CHECK(m.eye_left.count() > 0);
    CHECK(m.eye_right.count() > 0);
  }
}
