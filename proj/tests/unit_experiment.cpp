#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "helpers.hpp"

using namespace makeup;
using testutil::TempDir;

namespace {

constexpr int kRes = 8;

ExperimentConfig tiny_config(TempDir& td, uint64_t seed, const std::string& out = "out") {
  std::string root = td.sub("corpus");
  if (!std::filesystem::exists(root)) write_synthetic_corpus(root, 2, 4, 2, 2, 2, kRes, 77);
  ExperimentConfig cfg;
  cfg.gen_train_dir = root + "/gen_train";
  cfg.train_dir = root + "/train";
  cfg.test_dir = root + "/test";
  cfg.reference_dir = root + "/refs";
  cfg.resolution = kRes;
  cfg.max_gen_sources = 2;
  cfg.max_references = 2;
  cfg.model_base = 4;
  cfg.gen_base = 4;
  cfg.rect_growth = 4;
  cfg.gamma = 0.25;
  cfg.epochs = 2;
  cfg.interception_epochs = {1};
  cfg.batch_size = 4;
  cfg.lr = 0.05;
  cfg.augment = false;
  cfg.guidance_count = 2;
  cfg.noise_draws = 1;
  cfg.val_frac = 0.25;
  cfg.gan_epochs = 1;
  cfg.finetune_epochs = 1;
  cfg.defenses.strip_n = 4;
  cfg.defenses.nc_epochs = 3;
  cfg.defenses.nc_opt_samples = 4;
  cfg.seed = seed;
  cfg.out_dir = td.sub(out);
  return cfg;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  return nlohmann::json::parse(f);
}

}  // namespace

TEST_CASE("config json round trip, defaults, and hash stability") {
  TempDir td("cfg");
  ExperimentConfig c;
  c.gamma = 0.3;
  c.interception_epochs = {10, 20};
  c.selection_mode = "SSIM";
  c.defenses.strip = false;
  c.weights.cyc_g = 7.5;
  save_config(c, td.sub("c.json"));
  ExperimentConfig c2 = load_config(td.sub("c.json"));
  CHECK(c2.gamma == 0.3);
  CHECK(c2.interception_epochs == std::vector<int>{10, 20});
  CHECK(c2.selection_mode == "SSIM");
  CHECK(!c2.defenses.strip);
  CHECK(c2.weights.cyc_g == 7.5);
  CHECK(config_hash(c) == config_hash(c2));
  ExperimentConfig c3 = c;
  c3.seed = 99;
  CHECK(config_hash(c) != config_hash(c3));

  // Partial configs keep defaults for everything unspecified.
  std::ofstream(td.sub("partial.json")) << R"({"attack": {"gamma": 0.05}})";
  ExperimentConfig p = load_config(td.sub("partial.json"));
  CHECK(p.gamma == 0.05);
  CHECK(p.epochs == 60);
  CHECK(p.nmi_bins == 64);
  CHECK(p.defenses.fine_prune_layer == "conv7");

  CHECK_THROWS(load_config(td.sub("missing.json")));
}

TEST_CASE("config validation errors") {
  ExperimentConfig c;
  c.validate();  // defaults are valid
  ExperimentConfig bad_sel = c;
  bad_sel.selection_mode = "COSINE";
  CHECK_THROWS(bad_sel.validate());
  ExperimentConfig bad_win = c;
  bad_win.ssim_window = 7;
  CHECK_THROWS(bad_win.validate());
  ExperimentConfig bad_path = c;
  bad_path.train_dir = "/nonexistent/abc";
  CHECK_THROWS(bad_path.validate());
  ExperimentConfig bad_nmi = c;
  bad_nmi.nmi_channel_mode = "hsv";
  CHECK_THROWS(bad_nmi.validate());
  ExperimentConfig bad_l = c;
  bad_l.interception_epochs = {c.epochs};
  CHECK_THROWS(bad_l.validate());
}

TEST_CASE("synthetic corpus layout and identity consistency") {
  TempDir td("corpus");
  write_synthetic_corpus(td.sub("r"), 3, 4, 2, 5, 6, kRes, 13);
  Dataset train = load_dataset(td.sub("r/train"), kRes);
  Dataset test = load_dataset(td.sub("r/test"), kRes);
  CHECK(train.num_classes == 3);
  CHECK(test.num_classes == 3);
  CHECK(train.samples.size() == 12);
  CHECK(test.samples.size() == 6);
  CHECK(load_dataset(td.sub("r/gen_train"), kRes).samples.size() == 5);
  Dataset refs = load_dataset(td.sub("r/refs"), kRes);
  CHECK(refs.samples.size() == 6);

  // Same identity appearance across train and test, different jitter: a
  // test image of id000 is closer (NMI) to train id000 than to id002.
  NmiConfig nmi;
  double same = 0, other = 0;
  int ns = 0, no = 0;
  for (const auto& t : test.samples) {
    if (t.label != 0) continue;
    for (const auto& s : train.samples) {
      double v = normalized_mutual_information(t.pixels, s.pixels, nmi);
      if (s.label == 0) { same += v; ++ns; } else if (s.label == 2) { other += v; ++no; }
    }
  }
  CHECK(same / ns > other / no);

  // References carry makeup: saturated lips differ from the non-makeup
  // render of the same seed region.
  RegionMaskSet m = parse_regions(td.sub("r/refs") + "/" + refs.samples[0].sample_id, kRes, kRes);
  CHECK(m.lips.count() > 0);
}

TEST_CASE("build_gan_train_data and build_reference_set honor caps") {
  TempDir td("gd");
  ExperimentConfig cfg = tiny_config(td, 5);
  GanTrainData<real> d = build_gan_train_data(cfg);
  CHECK(d.sources.size() == 2);
  CHECK(d.refs.size() == 2);
  for (const auto& id : d.source_ids) CHECK(d.masks.count(id));
  for (const auto& id : d.ref_ids) CHECK(d.masks.count(id));
  ReferenceSet refs = build_reference_set(cfg);
  CHECK(refs.size() == 2);
  CHECK(refs.usage_counts == std::vector<int64_t>(2, 0));
}

TEST_CASE("run_experiment: full pipeline, artifacts, resume, determinism") {
  TempDir td("run");
  ExperimentConfig cfg = tiny_config(td, 3, "out_a");
  RunRecord rec = run_experiment(cfg);

  REQUIRE(rec.stages.size() == 4);
  for (const auto& s : rec.stages) CHECK(s.status == "done");
  CHECK(rec.config_hash == config_hash(cfg));
  CHECK(rec.attack_summary.contains("asr"));
  CHECK(rec.attack_summary.contains("ba"));
  for (const std::string& p :
       {"config.json", "run_record.json", "pretrain/gen_latest.ckpt", "poison/manifest.json",
        "poison/dataset", "train/target_best.ckpt", "train/gen_final.ckpt",
        "train/manifest_final.json", "eval/report.json", "eval/predictions.csv",
        "defenses/strip.csv", "defenses/spectral.csv", "defenses/fine_prune.csv",
        "defenses/clp.csv", "defenses/neural_cleanse.csv", "defenses/features.csv",
        "stages/train.done"})
    CHECK(std::filesystem::exists(cfg.out_dir + "/" + p));
  CHECK(!rec.defense_summary.empty());

  // Interception ran: final manifest entries carry generator version 2.
  PoisonManifest mf = load_manifest(cfg.out_dir + "/train/manifest_final.json");
  for (const auto& e : mf.entries) CHECK(e.generator_version == 2);

  // Resume: everything is skipped, summaries survive, artifacts untouched.
  std::string gen_hash = file_sha256(cfg.out_dir + "/train/gen_final.ckpt");
  RunRecord rec2 = run_experiment(cfg);
  for (const auto& s : rec2.stages) CHECK(s.status == "skipped");
  CHECK(rec2.attack_summary == rec.attack_summary);
  CHECK(rec2.defense_summary == rec.defense_summary);
  CHECK(file_sha256(cfg.out_dir + "/train/gen_final.ckpt") == gen_hash);

  // Fresh run with the same seed into a new directory: byte-identical
  // model and generator checkpoints and identical report numbers.
  ExperimentConfig cfg_b = tiny_config(td, 3, "out_b");
  RunRecord rec_b = run_experiment(cfg_b);
  CHECK(file_sha256(cfg_b.out_dir + "/train/gen_final.ckpt") == gen_hash);
  CHECK(file_sha256(cfg_b.out_dir + "/train/target_best.ckpt") ==
        file_sha256(cfg.out_dir + "/train/target_best.ckpt"));
  CHECK(rec_b.attack_summary == rec.attack_summary);

  // Partial resume: wiping only the defense stage re-runs just that one.
  std::filesystem::remove(cfg.out_dir + "/stages/defenses.done");
  RunRecord rec3 = run_experiment(cfg);
  CHECK(rec3.stages[0].status == "skipped");
  CHECK(rec3.stages[3].status == "done");
  CHECK(rec3.stages[3].name == "defenses");
  CHECK(rec3.attack_summary == rec.attack_summary);
}

TEST_CASE("export_features joins provenance with the manifest") {
  TempDir td("feat");
  ExperimentConfig cfg = tiny_config(td, 7, "out");
  Dataset d = load_dataset(cfg.train_dir, kRes);
  GeneratorBundle<real> gen(4, 4, 1, 8);
  gen.version = 1;
  ReferenceSet refs = build_reference_set(cfg);
  auto [dp, m] = poison_dataset(d, refs, gen, 0.25, 0, 9, NmiConfig{});
  TargetModel<real> model(d.num_classes, 4, 10);
  std::string out = td.sub("features.csv");
  export_features(model, dp, &m, out);

  std::ifstream f(out);
  std::string header;
  std::getline(f, header);
  CHECK(header.rfind("sample_id,label,poisoned,reference_id,f0", 0) == 0);
  int rows = 0, poisoned_rows = 0;
  std::string line;
  while (std::getline(f, line)) {
    ++rows;
    // sample_id,label,poisoned,...
    size_t c1 = line.find(','), c2 = line.find(',', c1 + 1);
    std::string sid = line.substr(0, c1);
    char pflag = line[c2 + 1];
    bool in_manifest = m.find(sid) != nullptr;
    CHECK(pflag == (in_manifest ? '1' : '0'));
    if (pflag == '1') ++poisoned_rows;
    // One feature column per embedding dimension.
    CHECK(std::count(line.begin(), line.end(), ',') == 3 + model.embed_dim());
  }
  CHECK(rows == static_cast<int>(dp.samples.size()));
  CHECK(poisoned_rows == static_cast<int>(m.entries.size()));
}

TEST_CASE("build_poisoned_test excludes the target class and triggers the rest") {
  TempDir td("bpt");
  ExperimentConfig cfg = tiny_config(td, 11, "out");
  Dataset d_test = load_dataset(cfg.test_dir, kRes);
  GeneratorBundle<real> gen(4, 4, 1, 12);
  gen.version = 1;
  ReferenceSet refs = build_reference_set(cfg);
  refs.usage_counts = {5, 1};
  Dataset pois = build_poisoned_test(d_test, gen, refs, 0);
  int non_target = 0;
  for (const auto& s : d_test.samples)
    if (s.label != 0) ++non_target;
  CHECK(static_cast<int>(pois.samples.size()) == non_target);
  for (const auto& s : pois.samples) {
    CHECK(s.label != 0);
    CHECK(s.provenance.poisoned);
    CHECK(s.provenance.reference_id == refs.references[0].sample_id);
  }
}

TEST_CASE("replay_usage_counts rebuilds the histogram from a manifest") {
  ReferenceSet refs;
  for (int i = 0; i < 3; ++i) {
    ImageSample s;
    s.sample_id = "r" + std::to_string(i);
    refs.references.push_back(s);
  }
  refs.usage_counts = {9, 9, 9};
  PoisonManifest m;
  m.entries.push_back({"a", "r1", 1, 0, ""});
  m.entries.push_back({"b", "r1", 1, 0, ""});
  m.entries.push_back({"c", "r2", 1, 0, ""});
  replay_usage_counts(refs, m);
  CHECK(refs.usage_counts == std::vector<int64_t>{0, 2, 1});
}

TEST_CASE("plot_curves writes an image") {
  TempDir td("plot");
  std::vector<std::vector<double>> series{{0, 1, 2, 3}, {3, 2, 1, 0.5}};
  plot_curves(series, {"up", "down"}, "demo", td.sub("p.png"));
  CHECK(std::filesystem::exists(td.sub("p.png")));
  Image img = load_image(td.sub("p.png"), 64);
  CHECK(img.dim(1) == 64);
}

TEST_CASE("emit_report and ablations") {
  TempDir td("rep");
  ExperimentConfig cfg = tiny_config(td, 15, "base");
  cfg.interception_epochs.clear();  // keep the ablation runs cheap
  cfg.defenses = DefenseToggles{};
  cfg.defenses.strip = cfg.defenses.spectral = cfg.defenses.fine_prune = false;
  cfg.defenses.clp = cfg.defenses.neural_cleanse = cfg.defenses.gradcam = false;
  run_experiment(cfg);

  emit_report(cfg.out_dir, td.sub("report"));
  CHECK(std::filesystem::exists(td.sub("report/report.md")));
  std::ifstream md(td.sub("report/report.md"));
  std::string all((std::istreambuf_iterator<char>(md)), std::istreambuf_iterator<char>());
  CHECK(all.find("Attack results") != std::string::npos);
  CHECK(all.find("| stage | status |") != std::string::npos);

  nlohmann::json sel = ablate_selection(cfg, {"NMI", "RAND"}, td.sub("ablate_sel"));
  REQUIRE(sel.size() == 2);
  CHECK(sel[0].at("mode") == "NMI");
  CHECK(sel[1].at("mode") == "RAND");
  CHECK(std::filesystem::exists(td.sub("ablate_sel/selection_ablation.csv")));
  CHECK(std::filesystem::exists(td.sub("ablate_sel/mode_RAND/run_record.json")));

  nlohmann::json rect = ablate_rectifier(cfg, td.sub("ablate_rect"));
  REQUIRE(rect.size() == 2);
  CHECK(rect[0].at("use_rectifier") == true);
  CHECK(rect[1].at("use_rectifier") == false);
  CHECK(std::filesystem::exists(td.sub("ablate_rect/rect_off/run_record.json")));

  // Comparison report pulls the second run's numbers in.
  emit_report(cfg.out_dir, td.sub("report2"), td.sub("ablate_rect/rect_off"));
  std::ifstream md2(td.sub("report2/report.md"));
  std::string all2((std::istreambuf_iterator<char>(md2)), std::istreambuf_iterator<char>());
  CHECK(all2.find("comparison run") != std::string::npos);
}

TEST_CASE("failed stages are recorded before the error propagates") {
  TempDir td("fail");
  ExperimentConfig cfg = tiny_config(td, 17, "out");
  // A generator-training image without its mask companion makes the
  // pretrain stage body throw after the run record machinery is active.
  std::filesystem::create_directories(td.sub("maskless/id000"));
  Rng rng(1);
  save_image(td.sub("maskless/id000/img000.png"), testutil::random_image(kRes, rng));
  cfg.gen_train_dir = td.sub("maskless");
  CHECK_THROWS(run_experiment(cfg));
  nlohmann::json rec = read_json(cfg.out_dir + "/run_record.json");
  bool failed = false;
  for (const auto& s : rec.at("stages"))
    if (s.value("status", std::string()) == "failed") {
      failed = true;
      CHECK(!s.value("error", std::string()).empty());
    }
  CHECK(failed);
}
