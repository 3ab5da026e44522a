#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "helpers.hpp"

using namespace makeup;
using testutil::TempDir;

TEST_CASE("round_half_even matches banker's rounding") {
  CHECK(round_half_even(0.5) == 0);
  CHECK(round_half_even(1.5) == 2);
  CHECK(round_half_even(2.5) == 2);
  CHECK(round_half_even(2.51) == 3);
  CHECK(round_half_even(4.0) == 4);
  CHECK(round_half_even(0.0) == 0);
}

TEST_CASE("load_dataset: lexicographic labels, sorted files, mask companions skipped") {
  TempDir td("ds");
  write_synthetic_dataset(td.sub("root"), 3, 4, 16, 5, 5);
  Dataset d = load_dataset(td.sub("root"), 16);
  CHECK(d.num_classes == 3);
  CHECK(d.samples.size() == 12);
  CHECK(d.class_names == std::vector<std::string>{"id000", "id001", "id002"});
  CHECK(d.samples[0].sample_id == "id000/img000.png");
  CHECK(d.samples[0].label == 0);
  CHECK(d.samples[11].label == 2);
  for (const auto& s : d.samples) {
    CHECK(s.pixels.shape == std::vector<int>{3, 16, 16});
    CHECK(s.sample_id.find(".mask.png") == std::string::npos);
  }
}

TEST_CASE("load_dataset error paths") {
  TempDir td("dserr");
  CHECK_THROWS_WITH_AS(load_dataset(td.sub("missing"), 16), doctest::Contains("missing"),
                       std::runtime_error);
  std::filesystem::create_directories(td.sub("empty/id000"));
  CHECK_THROWS_AS(load_dataset(td.sub("empty"), 16), std::runtime_error);
  std::filesystem::create_directories(td.sub("bad/id000"));
  std::ofstream(td.sub("bad/id000/corrupt.png")) << "not a png";
  try {
    load_dataset(td.sub("bad"), 16);
    CHECK(false);
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("corrupt.png") != std::string::npos);
  }
}

TEST_CASE("save/load dataset round trip preserves content hashes") {
  TempDir td("rt");
  write_synthetic_dataset(td.sub("a"), 2, 3, 16, 1, 1);
  Dataset d = load_dataset(td.sub("a"), 16);
  save_dataset(d, td.sub("b"));
  Dataset d2 = load_dataset(td.sub("b"), 16);
  REQUIRE(d2.samples.size() == d.samples.size());
  for (size_t i = 0; i < d.samples.size(); ++i)
    CHECK(image_content_hash(d.samples[i].pixels) == image_content_hash(d2.samples[i].pixels));
}

TEST_CASE("split_poison_candidates: exact size, partition, determinism") {
  TempDir td("split");
  write_synthetic_dataset(td.sub("r"), 4, 10, 16, 2, 2);
  Dataset d = load_dataset(td.sub("r"), 16);
  for (double gamma : {0.0, 0.05, 0.1, 0.3, 1.0}) {
    auto [db, rest] = split_poison_candidates(d, gamma, 9);
    CHECK(static_cast<int>(db.size()) == round_half_even(gamma * 40));
    CHECK(db.size() + rest.size() == d.samples.size());
    std::set<std::string> all(db.begin(), db.end());
    for (const auto& id : rest) CHECK(!all.count(id));
    auto [db2, rest2] = split_poison_candidates(d, gamma, 9);
    CHECK(db == db2);
    auto [db3, rest3] = split_poison_candidates(d, gamma, 10);
    if (gamma > 0.0 && gamma < 1.0) CHECK(db != db3);
  }
  CHECK_THROWS(split_poison_candidates(d, -0.1, 1));
  CHECK_THROWS(split_poison_candidates(d, 1.1, 1));
}

TEST_CASE("stratified split honors per-class quotas") {
  TempDir td("strat");
  write_synthetic_dataset(td.sub("r"), 4, 10, 16, 3, 3);
  Dataset d = load_dataset(td.sub("r"), 16);
  auto [db, rest] = split_poison_candidates(d, 0.1, 5, /*stratified=*/true);
  CHECK(db.size() == 4);
  std::map<std::string, int> per_class;
  for (const auto& id : db) ++per_class[id.substr(0, id.find('/'))];
  for (auto& [c, n] : per_class) CHECK(n == 1);
}

TEST_CASE("manifest json round trip") {
  TempDir td("man");
  PoisonManifest m;
  m.target_label = 2;
  m.poisoning_rate = 0.1;
  m.entries.push_back({"id001/img003.png", "style/ref1.png", 2, 1, "deadbeef"});
  save_manifest(m, td.sub("m.json"));
  PoisonManifest m2 = load_manifest(td.sub("m.json"));
  CHECK(m2.target_label == 2);
  CHECK(m2.poisoning_rate == 0.1);
  REQUIRE(m2.entries.size() == 1);
  CHECK(m2.entries[0].sample_id == "id001/img003.png");
  CHECK(m2.entries[0].generator_version == 2);
  CHECK(m2.entries[0].content_hash == "deadbeef");
  CHECK_THROWS(load_manifest(td.sub("nope.json")));
}

TEST_CASE("validate_manifest flags tampering") {
  TempDir td("val");
  write_synthetic_dataset(td.sub("r"), 2, 10, 16, 4, 4);
  Dataset clean = load_dataset(td.sub("r"), 16);
  Dataset pois = clean;
  PoisonManifest m;
  m.target_label = 0;
  m.poisoning_rate = 0.1;
  // Poison two samples by hand.
  for (int i : {10, 11}) {
    auto& s = pois.samples[static_cast<size_t>(i)];
    PoisonEntry e{s.sample_id, "style/r", 1, s.label, ""};
    for (auto& v : s.pixels.data) v = static_cast<real>(std::min(1.0f, v + 0.25f));
    s.label = 0;
    s.provenance = {true, "style/r", 1};
    e.content_hash = image_content_hash(s.pixels);
    m.entries.push_back(e);
  }
  CHECK(validate_manifest(pois, m, clean).ok);

  SUBCASE("benign tampering detected") {
    pois.samples[0].pixels.data[0] += 0.5f;
    CHECK(!validate_manifest(pois, m, clean).ok);
  }
  SUBCASE("label tampering detected") {
    pois.samples[10].label = 1;
    CHECK(!validate_manifest(pois, m, clean).ok);
  }
  SUBCASE("hash mismatch detected") {
    m.entries[0].content_hash = std::string(64, '0');
    CHECK(!validate_manifest(pois, m, clean).ok);
  }
  SUBCASE("entry count vs rate") {
    m.poisoning_rate = 0.5;
    CHECK(!validate_manifest(pois, m, clean).ok);
  }
  SUBCASE("structural mismatch throws") {
    pois.samples[0].sample_id = "id000/ghost.png";
    CHECK_THROWS(validate_manifest(pois, m, clean));
  }
}
