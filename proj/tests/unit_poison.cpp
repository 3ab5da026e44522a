#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "helpers.hpp"

using namespace makeup;
using testutil::TempDir;

namespace {

// Independent NMI oracle: explicit joint histogram, entropies in nats.
double nmi_oracle(const Image& a, const Image& b, const NmiConfig& cfg) {
  auto va = reduce_channel(a, cfg.channel_mode);
  auto vb = reduce_channel(b, cfg.channel_mode);
  std::map<std::pair<int, int>, double> joint;
  for (size_t i = 0; i < va.size(); ++i)
    joint[{intensity_bin(va[i], cfg.bins), intensity_bin(vb[i], cfg.bins)}] += 1.0;
  double n = static_cast<double>(va.size());
  std::map<int, double> pa, pb;
  for (auto& [k, c] : joint) {
    pa[k.first] += c / n;
    pb[k.second] += c / n;
  }
  double ha = 0, hb = 0, mi = 0;
  for (auto& [k, p] : pa) ha -= p * std::log(p);
  for (auto& [k, p] : pb) hb -= p * std::log(p);
  for (auto& [k, c] : joint) {
    double p = c / n;
    mi += p * std::log(p / (pa[k.first] * pb[k.second]));
  }
  return ha + hb > 0 ? 2.0 * mi / (ha + hb) : 0.0;
}

ReferenceSet make_refs(int n, uint64_t seed, int res = 8) {
  ReferenceSet refs;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    ImageSample s;
    s.pixels = testutil::random_image(res, rng);
    s.sample_id = "style/ref" + std::to_string(i) + ".png";
    refs.references.push_back(s);
  }
  refs.usage_counts.assign(static_cast<size_t>(n), 0);
  return refs;
}

GeneratorBundle<real> pretrained_bundle(uint64_t seed) {
  GeneratorBundle<real> b(4, 4, 1, seed);
  b.version = 1;
  // Perturb off the identity so poisoned pixels differ from clean ones.
  Rng rng(seed + 3);
  for (auto& [name, p] : b.params_g())
    for (auto& v : p->value.data) v += static_cast<real>(rng.uniform(-0.05, 0.05));
  return b;
}

}  // namespace

TEST_CASE("NMI matches a brute-force joint-histogram oracle to 1e-12") {
  Rng rng(31);
  NmiConfig cfg;
  cfg.bins = 4;
  for (int trial = 0; trial < 6; ++trial) {
    Image a = testutil::random_image(8, rng);
    Image b = testutil::random_image(8, rng);
    for (auto mode : {ChannelMode::Luma, ChannelMode::MeanRgb}) {
      cfg.channel_mode = mode;
      double got = normalized_mutual_information(a, b, cfg);
      CHECK(got == doctest::Approx(nmi_oracle(a, b, cfg)).epsilon(1e-12));
      CHECK(got == doctest::Approx(normalized_mutual_information(b, a, cfg)).epsilon(1e-12));
    }
  }
}

TEST_CASE("NMI analytic values and edge cases") {
  Rng rng(33);
  Image x = testutil::random_image(16, rng);
  NmiConfig cfg;  // 64 bins, luma
  CHECK(normalized_mutual_information(x, x, cfg) == doctest::Approx(1.0).epsilon(1e-12));

  Image c = Image::full({3, 8, 8}, 0.5f);
  CHECK(normalized_mutual_information(c, c, cfg) == 0.0);

  Image y = testutil::random_image(16, rng);
  double v = normalized_mutual_information(x, y, cfg);
  CHECK(v >= 0.0);
  CHECK(v <= 1.0 + 1e-12);

  Image small = testutil::random_image(8, rng);
  CHECK_THROWS(normalized_mutual_information(x, small, cfg));
  NmiConfig bad;
  bad.bins = 1;
  CHECK_THROWS(normalized_mutual_information(x, x, bad));
}

TEST_CASE("ssim sanity") {
  Rng rng(35);
  Image x = testutil::random_image(16, rng);
  Image y = testutil::random_image(16, rng);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(ssim(x, y) < 0.99);
  CHECK_THROWS(ssim(x, testutil::random_image(8, rng)));
}

TEST_CASE("select_reference: argmax semantics, ties, usage counts") {
  Rng rng(37);
  ReferenceSet refs = make_refs(5, 40);
  NmiConfig cfg;

  // A reference selects itself (NMI(x,x)=1 beats everything else).
  int self = select_reference_index(refs.references[3].pixels, refs, cfg);
  CHECK(self == 3);
  CHECK(refs.usage_counts[3] == 1);

  // Exhaustive-oracle agreement on fresh probes.
  for (int trial = 0; trial < 4; ++trial) {
    Image probe = testutil::random_image(8, rng);
    double best = -1;
    int want = 0;
    for (size_t i = 0; i < refs.size(); ++i) {
      double s = normalized_mutual_information(probe, refs.references[i].pixels, cfg);
      if (s > best) {
        best = s;
        want = static_cast<int>(i);
      }
    }
    CHECK(select_reference_index(probe, refs, cfg) == want);
  }

  // Exact tie goes to the lowest index: duplicate references.
  ReferenceSet dup = make_refs(1, 41);
  dup.references.push_back(dup.references[0]);
  dup.references[1].sample_id = "style/copy.png";
  dup.usage_counts.assign(2, 0);
  Image probe = testutil::random_image(8, rng);
  CHECK(select_reference_index(probe, dup, cfg) == 0);

  // SSIM mode self-selection and RAND mode contract.
  ReferenceSet refs2 = make_refs(4, 42, 16);
  CHECK(select_reference_index(refs2.references[2].pixels, refs2, cfg, SelectionMode::Ssim) == 2);
  CHECK_THROWS(select_reference_index(probe, refs2, cfg, SelectionMode::Rand, nullptr));
  Rng r1(7), r2(7);
  int a = select_reference_index(probe, refs2, cfg, SelectionMode::Rand, &r1);
  int b = select_reference_index(probe, refs2, cfg, SelectionMode::Rand, &r2);
  CHECK(a == b);

  ReferenceSet empty;
  CHECK_THROWS(select_reference_index(probe, empty, cfg));
}

TEST_CASE("poison_dataset: gamma=0 identity, counts, labels, benign isolation") {
  TempDir td("pz");
  write_synthetic_dataset(td.sub("r"), 4, 10, 8, 6, 6);
  Dataset clean = load_dataset(td.sub("r"), 8);
  ReferenceSet refs = make_refs(3, 50);
  auto gen = pretrained_bundle(51);
  NmiConfig cfg;

  auto [p0, m0] = poison_dataset(clean, refs, gen, 0.0, 1, 9, cfg);
  CHECK(m0.entries.empty());
  for (size_t i = 0; i < clean.samples.size(); ++i) {
    CHECK(image_content_hash(p0.samples[i].pixels) ==
          image_content_hash(clean.samples[i].pixels));
    CHECK(p0.samples[i].label == clean.samples[i].label);
  }

  auto [p, m] = poison_dataset(clean, refs, gen, 0.1, 1, 9, cfg);
  CHECK(static_cast<int>(m.entries.size()) == round_half_even(0.1 * 40));
  CHECK(p.role == DatasetRole::Poisoned);
  int64_t used = 0;
  for (auto c : refs.usage_counts) used += c;
  CHECK(used == static_cast<int64_t>(m.entries.size()));
  for (const auto& e : m.entries) {
    const ImageSample* s = p.find(e.sample_id);
    REQUIRE(s);
    CHECK(s->label == 1);
    CHECK(s->provenance.poisoned);
    CHECK(s->provenance.reference_id == e.reference_id);
    CHECK(s->provenance.generator_version == 1);
    CHECK(image_content_hash(s->pixels) == e.content_hash);
    CHECK(e.original_label == clean.find(e.sample_id)->label);
  }
  for (const auto& s : p.samples)
    if (!m.find(s.sample_id)) {
      CHECK(image_content_hash(s.pixels) ==
            image_content_hash(clean.find(s.sample_id)->pixels));
      CHECK(!s.provenance.poisoned);
    }
  CHECK(validate_manifest(p, m, clean).ok);
}

TEST_CASE("poison_dataset: determinism and pretraining guard") {
  TempDir td("pz2");
  write_synthetic_dataset(td.sub("r"), 2, 10, 8, 7, 7);
  Dataset clean = load_dataset(td.sub("r"), 8);
  NmiConfig cfg;

  auto gen1 = pretrained_bundle(60);
  auto gen2 = pretrained_bundle(60);
  ReferenceSet ra = make_refs(3, 61), rb = make_refs(3, 61);
  auto [pa, ma] = poison_dataset(clean, ra, gen1, 0.3, 0, 4, cfg);
  auto [pb, mb] = poison_dataset(clean, rb, gen2, 0.3, 0, 4, cfg);
  REQUIRE(ma.entries.size() == mb.entries.size());
  for (size_t i = 0; i < ma.entries.size(); ++i) {
    CHECK(ma.entries[i].sample_id == mb.entries[i].sample_id);
    CHECK(ma.entries[i].content_hash == mb.entries[i].content_hash);
  }

  GeneratorBundle<real> fresh(4, 4, 1, 62);  // version 0
  ReferenceSet rc = make_refs(3, 63);
  CHECK_THROWS(poison_dataset(clean, rc, fresh, 0.1, 0, 4, cfg));
}

TEST_CASE("update_poisoned_dataset: stability, isolation, idempotence") {
  TempDir td("upd");
  write_synthetic_dataset(td.sub("r"), 2, 10, 8, 8, 8);
  Dataset clean = load_dataset(td.sub("r"), 8);
  ReferenceSet refs = make_refs(3, 70);
  auto gen = pretrained_bundle(71);
  NmiConfig cfg;
  auto [p, m] = poison_dataset(clean, refs, gen, 0.3, 1, 5, cfg);

  // Same generator, same references: regenerated pixels are identical.
  auto [u1, mu1] = update_poisoned_dataset(p, m, clean, refs, gen, cfg);
  REQUIRE(mu1.entries.size() == m.entries.size());
  for (size_t i = 0; i < m.entries.size(); ++i)
    CHECK(mu1.entries[i].content_hash == m.entries[i].content_hash);

  // Benign samples are untouched by the update.
  for (const auto& s : u1.samples)
    if (!m.find(s.sample_id))
      CHECK(image_content_hash(s.pixels) == image_content_hash(p.find(s.sample_id)->pixels));

  // Newer generator changes pixels; applying it twice is idempotent.
  auto gen2 = gen;
  gen2.version = 2;
  Rng nud(72);
  for (auto& [name, prm] : gen2.params_g())
    for (auto& v : prm->value.data) v += static_cast<real>(nud.uniform(-0.03, 0.03));
  auto [u2, mu2] = update_poisoned_dataset(p, m, clean, refs, gen2, cfg);
  bool changed = false;
  for (size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(mu2.entries[i].generator_version == 2);
    if (mu2.entries[i].content_hash != m.entries[i].content_hash) changed = true;
  }
  CHECK(changed);
  auto [u3, mu3] = update_poisoned_dataset(u2, mu2, clean, refs, gen2, cfg);
  for (size_t i = 0; i < mu2.entries.size(); ++i)
    CHECK(mu3.entries[i].content_hash == mu2.entries[i].content_hash);

  // Version guard and missing-original error.
  GeneratorBundle<real> old(4, 4, 1, 73);
  old.version = 1;
  CHECK_THROWS(update_poisoned_dataset(u2, mu2, clean, refs, old, cfg));
  Dataset truncated = clean;
  truncated.samples.erase(truncated.samples.begin(),
                          truncated.samples.begin() + 10);
  bool missing_ok = false;
  try {
    update_poisoned_dataset(p, m, truncated, refs, gen, cfg);
  } catch (const std::exception& e) {
    missing_ok = std::string(e.what()).find("clean original missing") != std::string::npos;
  }
  CHECK(missing_ok);
}

TEST_CASE("inference_reference_index picks the mode of the usage histogram") {
  ReferenceSet refs = make_refs(4, 80);
  CHECK_THROWS(inference_reference_index(refs));
  refs.usage_counts = {2, 5, 5, 1};
  CHECK(inference_reference_index(refs) == 1);  // tie to the lowest index
  refs.usage_counts = {0, 1, 7, 3};
  CHECK(inference_reference_index(refs) == 2);

  // Recount from a manifest mirrors the live counts.
  TempDir td("inf");
  write_synthetic_dataset(td.sub("r"), 2, 10, 8, 9, 9);
  Dataset clean = load_dataset(td.sub("r"), 8);
  ReferenceSet live = make_refs(3, 81);
  auto gen = pretrained_bundle(82);
  auto [p, m] = poison_dataset(clean, live, gen, 0.3, 0, 6, NmiConfig{});
  std::vector<int64_t> recount(live.size(), 0);
  for (const auto& e : m.entries)
    for (size_t i = 0; i < live.size(); ++i)
      if (live.references[i].sample_id == e.reference_id) ++recount[i];
  CHECK(recount == live.usage_counts);
}
