#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "makeup/core/image_io.hpp"
#include "makeup/data/dataset.hpp"
#include "makeup/faceprep/regions.hpp"

namespace makeup {

// Procedurally drawn face images with exact region-mask companions.
// Identities differ in skin/background/hair colors and face geometry;
// per-image jitter varies pose, lighting, and noise so similarity metrics
// have something to discriminate on.

struct SyntheticFaceParams {
  double skin[3], bg[3], hair[3], lip[3], eye[3];
  double face_w = 0.34, face_h = 0.44;  // ellipse half-axes as a fraction of R
};

inline SyntheticFaceParams identity_params(uint64_t identity_seed) {
  Rng rng(identity_seed);
  SyntheticFaceParams p;
  auto color = [&](double* c, double lo, double hi) {
    for (int i = 0; i < 3; ++i) c[i] = rng.uniform(lo, hi);
  };
  p.skin[0] = rng.uniform(0.55, 0.9);
  p.skin[1] = p.skin[0] * rng.uniform(0.72, 0.88);
  p.skin[2] = p.skin[1] * rng.uniform(0.7, 0.9);
  color(p.bg, 0.05, 0.95);
  color(p.hair, 0.05, 0.5);
  p.lip[0] = rng.uniform(0.5, 0.75);
  p.lip[1] = rng.uniform(0.2, 0.4);
  p.lip[2] = rng.uniform(0.25, 0.45);
  color(p.eye, 0.05, 0.45);
  p.face_w = rng.uniform(0.28, 0.38);
  p.face_h = rng.uniform(0.38, 0.48);
  return p;
}

struct SyntheticFace {
  Image pixels;
  std::vector<unsigned char> mask_codes;  // 0 none, 1 skin, 2 lips, 3 eyeL, 4 eyeR
};

// makeup=true paints saturated lips and eye shadow (reference-style).
inline SyntheticFace render_face(const SyntheticFaceParams& p, int res, Rng& rng,
                                 bool makeup = false) {
  SyntheticFace out;
  out.pixels = Image({3, res, res});
  out.mask_codes.assign(static_cast<size_t>(res) * res, 0);

  double cx = res * (0.5 + rng.uniform(-0.04, 0.04));
  double cy = res * (0.52 + rng.uniform(-0.04, 0.04));
  double aw = res * p.face_w * (1.0 + rng.uniform(-0.06, 0.06));
  double ah = res * p.face_h * (1.0 + rng.uniform(-0.06, 0.06));
  // Radii clamped so lips/eyes stay at least a pixel wide at tiny
  // resolutions; every region is guaranteed nonempty below.
  double eye_dx = res * 0.14, eye_y = cy - res * 0.1;
  double eye_r = std::max(res * 0.045, 0.8);
  double shadow_r = eye_r * 2.1;
  double lip_y = cy + res * 0.18;
  double lip_w = std::max(res * 0.13, 1.6), lip_h = std::max(res * 0.05, 0.9);
  double light = 1.0 + rng.uniform(-0.12, 0.12);

  double mk_lip[3] = {0.85, 0.08, 0.25};
  double mk_shadow[3] = {0.45, 0.15, 0.6};

  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      size_t i = static_cast<size_t>(y) * res + x;
      double fx = (x - cx) / aw, fy = (y - cy) / ah;
      bool in_face = fx * fx + fy * fy <= 1.0;
      bool in_hair = !in_face && (fx * fx + fy * fy <= 1.35) && y < cy;
      double exl = x - (cx - eye_dx), exr = x - (cx + eye_dx), ey = y - eye_y;
      bool in_eye_l = exl * exl + ey * ey <= eye_r * eye_r;
      bool in_eye_r = exr * exr + ey * ey <= eye_r * eye_r;
      bool in_shadow_l = !in_eye_l && exl * exl + ey * ey <= shadow_r * shadow_r;
      bool in_shadow_r = !in_eye_r && exr * exr + ey * ey <= shadow_r * shadow_r;
      double lx = (x - cx) / lip_w, ly = (y - lip_y) / lip_h;
      bool in_lips = lx * lx + ly * ly <= 1.0;

      const double* c = p.bg;
      if (in_hair) c = p.hair;
      if (in_face) c = p.skin;
      if (in_face && (in_shadow_l || in_shadow_r) && makeup) c = mk_shadow;
      if (in_eye_l || in_eye_r) c = p.eye;
      if (in_lips) c = makeup ? mk_lip : p.lip;

      for (int ch = 0; ch < 3; ++ch) {
        double v = c[ch] * light + rng.uniform(-0.02, 0.02);
        out.pixels.data[static_cast<size_t>(ch) * res * res + i] =
            static_cast<real>(std::clamp(v, 0.0, 1.0));
      }
      if (in_lips)
        out.mask_codes[i] = 2;
      else if (in_eye_l || in_shadow_l)
        out.mask_codes[i] = 3;
      else if (in_eye_r || in_shadow_r)
        out.mask_codes[i] = 4;
      else if (in_face)
        out.mask_codes[i] = 1;
    }

  // Rounding can still wipe out a sub-pixel region; pin its center pixel.
  auto ensure = [&](unsigned char code, double px, double py, const double* c) {
    for (unsigned char m : out.mask_codes)
      if (m == code) return;
    int y = std::clamp(static_cast<int>(std::lround(py)), 0, res - 1);
    int x = std::clamp(static_cast<int>(std::lround(px)), 0, res - 1);
    size_t i = static_cast<size_t>(y) * res + x;
    out.mask_codes[i] = code;
    for (int ch = 0; ch < 3; ++ch)
      out.pixels.data[static_cast<size_t>(ch) * res * res + i] =
          static_cast<real>(std::clamp(c[ch] * light, 0.0, 1.0));
  };
  ensure(2, cx, lip_y, makeup ? mk_lip : p.lip);
  ensure(3, cx - eye_dx, eye_y, p.eye);
  ensure(4, cx + eye_dx, eye_y, p.eye);
  ensure(1, cx, cy, p.skin);
  return out;
}

// Identity-per-directory dataset with ".mask.png" companions. Identity
// appearance is keyed by identity_seed alone, so train and test splits
// drawn with different jitter_seeds share the same identities.
inline void write_synthetic_dataset(const std::string& root, int num_identities,
                                    int images_per_identity, int res, uint64_t identity_seed,
                                    uint64_t jitter_seed, bool makeup = false) {
  namespace fs = std::filesystem;
  for (int id = 0; id < num_identities; ++id) {
    char cname[16];
    std::snprintf(cname, sizeof cname, "id%03d", id);
    fs::path dir = fs::path(root) / cname;
    fs::create_directories(dir);
    SyntheticFaceParams p =
        identity_params(identity_seed * 1000003ull + static_cast<uint64_t>(id));
    Rng rng(jitter_seed ^ (0xabcdull + static_cast<uint64_t>(id) * 7919ull));
    for (int k = 0; k < images_per_identity; ++k) {
      SyntheticFace face = render_face(p, res, rng, makeup);
      char fname[32];
      std::snprintf(fname, sizeof fname, "img%03d.png", k);
      std::string ip = (dir / fname).string();
      save_image(ip, face.pixels);
      write_mask_png(mask_path_for(ip), face.mask_codes, res, res);
    }
  }
}

// Standard corpus layout for one experiment: train/test/gen_train/refs.
inline void write_synthetic_corpus(const std::string& root, int num_identities, int train_per_id,
                                   int test_per_id, int gen_sources, int references, int res,
                                   uint64_t seed) {
  write_synthetic_dataset(root + "/train", num_identities, train_per_id, res, seed, seed);
  write_synthetic_dataset(root + "/test", num_identities, test_per_id, res, seed, seed + 500);
  write_synthetic_dataset(root + "/gen_train", 1, gen_sources, res, seed + 1000, seed + 1000);
  write_synthetic_dataset(root + "/refs", 1, references, res, seed + 2000, seed + 2000,
                          /*makeup=*/true);
}

}  // namespace makeup
