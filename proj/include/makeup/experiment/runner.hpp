#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "makeup/defense/clp.hpp"
#include "makeup/defense/fine_prune.hpp"
#include "makeup/defense/gradcam.hpp"
#include "makeup/defense/neural_cleanse.hpp"
#include "makeup/defense/spectral.hpp"
#include "makeup/defense/strip.hpp"
#include "makeup/experiment/config.hpp"

namespace makeup {

struct StageRecord {
  std::string name;
  std::string status;  // done | failed | skipped
  std::string timestamp;
  std::map<std::string, std::string> artifacts;  // path -> sha256
  std::string error;
};

struct RunRecord {
  std::string config_hash;
  std::vector<StageRecord> stages;
  nlohmann::json attack_summary;   // asr/ba
  nlohmann::json defense_summary;  // per-method key figures

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["attack_summary"] = attack_summary;
    j["defense_summary"] = defense_summary;
    j["stages"] = nlohmann::json::array();
    for (const auto& s : stages) {
      nlohmann::json js{{"name", s.name},
                        {"status", s.status},
                        {"timestamp", s.timestamp},
                        {"artifacts", s.artifacts}};
      if (!s.error.empty()) js["error"] = s.error;
      j["stages"].push_back(js);
    }
    return j;
  }
};

namespace detail {

inline std::string now_string() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
  return buf;
}

inline std::string done_marker(const std::string& out_dir, const std::string& stage) {
  return out_dir + "/stages/" + stage + ".done";
}

inline bool stage_done(const std::string& out_dir, const std::string& stage) {
  return std::filesystem::exists(done_marker(out_dir, stage));
}

inline void mark_done(const std::string& out_dir, const std::string& stage,
                      const std::map<std::string, std::string>& artifacts) {
  std::filesystem::create_directories(out_dir + "/stages");
  std::ofstream f(done_marker(out_dir, stage));
  f << nlohmann::json{{"stage", stage}, {"artifacts", artifacts}}.dump(2) << "\n";
}

}  // namespace detail

// Generator-training corpus: sources from gen_train_dir, references from
// reference_dir, region masks parsed from the per-image companion files.
inline GanTrainData<real> build_gan_train_data(const ExperimentConfig& cfg) {
  GanTrainData<real> d;
  Dataset src = load_dataset(cfg.gen_train_dir, cfg.resolution, DatasetRole::GeneratorTraining);
  Dataset ref = load_dataset(cfg.reference_dir, cfg.resolution, DatasetRole::GeneratorTraining);
  auto add = [&](const Dataset& ds, const std::string& root, int cap,
                 std::vector<Tensor<real>>& imgs, std::vector<std::string>& ids) {
    for (const auto& s : ds.samples) {
      if (cap > 0 && static_cast<int>(imgs.size()) >= cap) break;
      imgs.push_back(s.pixels);
      ids.push_back(s.sample_id);
      d.masks[s.sample_id] =
          parse_regions(root + "/" + s.sample_id, cfg.resolution, cfg.resolution);
    }
  };
  add(src, cfg.gen_train_dir, cfg.max_gen_sources, d.sources, d.source_ids);
  add(ref, cfg.reference_dir, cfg.max_references, d.refs, d.ref_ids);
  return d;
}

inline ReferenceSet build_reference_set(const ExperimentConfig& cfg) {
  ReferenceSet refs;
  Dataset ref = load_dataset(cfg.reference_dir, cfg.resolution, DatasetRole::GeneratorTraining);
  for (const auto& s : ref.samples) {
    if (cfg.max_references > 0 &&
        static_cast<int>(refs.references.size()) >= cfg.max_references)
      break;
    refs.references.push_back(s);
  }
  refs.usage_counts.assign(refs.references.size(), 0);
  return refs;
}

inline void replay_usage_counts(ReferenceSet& refs, const PoisonManifest& m) {
  std::fill(refs.usage_counts.begin(), refs.usage_counts.end(), 0);
  for (const auto& e : m.entries)
    for (size_t i = 0; i < refs.references.size(); ++i)
      if (refs.references[i].sample_id == e.reference_id) ++refs.usage_counts[i];
}

// Per-sample embedding export with provenance columns.
template <class T>
inline void export_features(TargetModel<T>& model, const Dataset& d, const PoisonManifest* m,
                            const std::string& out_path) {
  std::ofstream f(out_path);
  if (!f) throw std::runtime_error("cannot write feature file: " + out_path);
  int dim = model.embed_dim();
  f << "sample_id,label,poisoned,reference_id";
  for (int i = 0; i < dim; ++i) f << ",f" << i;
  f << "\n";
  for (const auto& s : d.samples) {
    const PoisonEntry* e = m ? m->find(s.sample_id) : nullptr;
    bool poisoned = e || s.provenance.poisoned;
    std::string ref = e ? e->reference_id : s.provenance.reference_id;
    Tensor<T> feat = model.features(s.pixels.template cast<T>());
    f << s.sample_id << ',' << s.label << ',' << (poisoned ? 1 : 0) << ',' << ref;
    for (int64_t i = 0; i < feat.numel(); ++i) f << ',' << feat[i];
    f << "\n";
  }
}

// Test set with every non-target sample triggered (for defense scoring).
template <class T>
inline Dataset build_poisoned_test(const Dataset& d_test, GeneratorBundle<T>& gen,
                                   const ReferenceSet& refs, int target_label) {
  int ri = inference_reference_index(refs);
  const Image& ref = refs.references[static_cast<size_t>(ri)].pixels;
  Dataset out;
  out.num_classes = d_test.num_classes;
  out.role = DatasetRole::Poisoned;
  out.class_names = d_test.class_names;
  for (const auto& s : d_test.samples) {
    if (s.label == target_label) continue;
    ImageSample p = s;
    p.pixels = gen.transfer(s.pixels.template cast<T>(), ref.template cast<T>()).template cast<real>();
    p.provenance = {true, refs.references[static_cast<size_t>(ri)].sample_id, gen.version};
    out.samples.push_back(std::move(p));
  }
  return out;
}

template <class T>
inline nlohmann::json run_defenses(const ExperimentConfig& cfg, TargetModel<T>& model,
                                   GeneratorBundle<T>& gen, ReferenceSet& refs,
                                   const Dataset& d_train_clean, const Dataset& d_test,
                                   const std::string& out_dir,
                                   std::map<std::string, std::string>& artifacts) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const DefenseToggles& dt = cfg.defenses;
  nlohmann::json summary;
  Dataset d_test_pois = build_poisoned_test(d_test, gen, refs, cfg.target_label);
  auto record = [&](const std::string& path) { artifacts[path] = file_sha256(path); };

  if (dt.strip) {
    StripReport rep =
        strip_report(model, d_test, d_test_pois, d_train_clean, dt.strip_n, cfg.seed);
    std::string p = out_dir + "/strip.csv";
    rep.write_csv(p);
    record(p);
    summary["strip"] = {{"best_detection_at_fpr5", rep.best_detection_at_fpr(0.05)}};
  }

  if (dt.spectral) {
    std::vector<std::vector<double>> feats;
    std::vector<int> labels;
    std::vector<bool> pois;
    auto push = [&](const Dataset& d, bool p) {
      for (const auto& s : d.samples) {
        Tensor<T> f = model.features(s.pixels.template cast<T>());
        feats.emplace_back(f.data.begin(), f.data.end());
        labels.push_back(s.label);
        pois.push_back(p);
      }
    };
    push(d_test, false);
    // Poisoned samples carry the target label in training, so score them
    // inside the target class as the defense would see them.
    Dataset relabeled = d_test_pois;
    for (auto& s : relabeled.samples) s.label = cfg.target_label;
    push(relabeled, true);
    SpectralReport rep = spectral_scores(feats, labels);
    std::string p = out_dir + "/spectral.csv";
    rep.write_csv(p);
    record(p);
    std::vector<double> scores;
    for (const auto& r : rep.records) scores.push_back(r.score);
    summary["spectral"] = {{"auc", score_auc(scores, pois)}};
  }

  auto asr_fn = [&](TargetModel<T>& m) {
    int hits = 0, total = 0;
    for (const auto& s : d_test_pois.samples) {
      if (m.predict(s.pixels.template cast<T>()) == cfg.target_label) ++hits;
      ++total;
    }
    return total ? 100.0 * hits / total : 0.0;
  };

  if (dt.fine_prune) {
    FinePruneResult<T> res = fine_prune<T>(model, d_train_clean, dt.fine_prune_layer,
                                           dt.fine_prune_budget, d_test, asr_fn);
    std::string p = out_dir + "/fine_prune.csv";
    res.write_curve(p);
    record(p);
    summary["fine_prune"] = {{"pruned_channels", res.pruned_channels.size()},
                             {"final_ba", res.curve.back().ba},
                             {"final_asr", res.curve.back().asr}};
  }

  if (dt.clp) {
    ClpResult<T> res = clp_prune(model, dt.clp_u);
    std::string p = out_dir + "/clp.csv";
    res.stats.write_csv(p);
    record(p);
    double ba_before = 100.0 * accuracy(model, d_test, nullptr);
    double ba_after = 100.0 * accuracy(res.model, d_test, nullptr);
    int pruned = 0;
    for (const auto& l : res.stats.layers) pruned += static_cast<int>(l.pruned.size());
    summary["clp"] = {{"ba_before", ba_before},
                      {"ba_after", ba_after},
                      {"asr_after", asr_fn(res.model)},
                      {"pruned_channels", pruned}};
  }

  if (dt.neural_cleanse) {
    Dataset d_opt;
    d_opt.num_classes = d_train_clean.num_classes;
    for (const auto& s : d_train_clean.samples) {
      if (static_cast<int>(d_opt.samples.size()) >= dt.nc_opt_samples) break;
      d_opt.samples.push_back(s);
    }
    NeuralCleanseConfig nc;
    nc.epochs = dt.nc_epochs;
    nc.lr = dt.nc_lr;
    nc.seed = cfg.seed;
    NeuralCleanseReport rep = neural_cleanse(model, d_opt, nc);
    std::string p = out_dir + "/neural_cleanse.csv";
    rep.write_csv(p);
    record(p);
    for (size_t i = 0; i < rep.triggers.size(); ++i) {
      std::string mp = out_dir + "/nc_mask_" + std::to_string(i) + ".png";
      Image m3({3, rep.triggers[i].mask.dim(0), rep.triggers[i].mask.dim(1)});
      for (int ch = 0; ch < 3; ++ch)
        std::copy(rep.triggers[i].mask.data.begin(), rep.triggers[i].mask.data.end(),
                  m3.data.begin() + ch * rep.triggers[i].mask.numel());
      save_image(mp, m3);
      save_image(out_dir + "/nc_pattern_" + std::to_string(i) + ".png",
                 rep.triggers[i].pattern);
    }
    summary["neural_cleanse"] = {{"norms", rep.norms},
                                 {"anomaly_index", rep.anomaly_index},
                                 {"flagged", rep.flagged}};
  }

  if (dt.gradcam && !d_test_pois.samples.empty()) {
    const auto& s = d_test_pois.samples.front();
    Tensor<real> map = attention_map(model, s.pixels, "conv7", cfg.target_label);
    Image m3({3, map.dim(0), map.dim(1)});
    for (int ch = 0; ch < 3; ++ch)
      std::copy(map.data.begin(), map.data.end(), m3.data.begin() + ch * map.numel());
    std::string p = out_dir + "/gradcam_poisoned.png";
    save_image(p, m3);
    record(p);
    summary["gradcam"] = {{"sample_id", s.sample_id}};
  }

  return summary;
}

// Stage-resumable orchestration: pretrain -> poison -> train(+finetune/
// update+eval) -> defenses. Completed stages (done-marker present) are
// loaded from their artifacts instead of re-run.
inline RunRecord run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  save_config(cfg, cfg.out_dir + "/config.json");

  RunRecord rec;
  rec.config_hash = config_hash(cfg);
  auto stage = [&](const std::string& name, auto&& body) {
    StageRecord sr;
    sr.name = name;
    sr.timestamp = detail::now_string();
    if (detail::stage_done(cfg.out_dir, name)) {
      sr.status = "skipped";
      rec.stages.push_back(sr);
      return;
    }
    try {
      body(sr.artifacts);
      sr.status = "done";
      detail::mark_done(cfg.out_dir, name, sr.artifacts);
    } catch (const std::exception& e) {
      sr.status = "failed";
      sr.error = e.what();
      rec.stages.push_back(sr);
      std::ofstream f(cfg.out_dir + "/run_record.json");
      f << rec.to_json().dump(2) << "\n";
      throw;
    }
    rec.stages.push_back(sr);
  };

  Dataset d_c = load_dataset(cfg.train_dir, cfg.resolution, DatasetRole::Clean);
  Dataset d_test = load_dataset(cfg.test_dir, cfg.resolution, DatasetRole::Clean);
  ReferenceSet refs = build_reference_set(cfg);
  AttackConfig acfg = cfg.attack();
  acfg.out_dir = cfg.out_dir;
  acfg.pretrain.use_rectifier = cfg.use_rectifier;
  acfg.finetune.use_rectifier = cfg.use_rectifier;

  std::string gen_ckpt = cfg.out_dir + "/pretrain/gen_latest.ckpt";
  GeneratorBundle<real> gen(cfg.gen_base, cfg.rect_growth, cfg.rect_depth, cfg.seed);
  stage("pretrain", [&](std::map<std::string, std::string>& art) {
    GanTrainData<real> d_t = build_gan_train_data(cfg);
    GanTrainConfig pc = acfg.pretrain;
    pc.checkpoint_dir = cfg.out_dir + "/pretrain";
    pc.curve_csv = cfg.out_dir + "/pretrain/curve.csv";
    pretrain_generator(gen, d_t, pc);
    art[gen_ckpt] = file_sha256(gen_ckpt);
    art[pc.curve_csv] = file_sha256(pc.curve_csv);
  });
  if (gen.version < 1) gen = GeneratorBundle<real>::load(gen_ckpt);

  // The poisoned dataset always round-trips through disk so a fresh run
  // and a resumed run train on identical 8-bit pixels.
  std::string poison_dir = cfg.out_dir + "/poison";
  std::string manifest_path = poison_dir + "/manifest.json";
  stage("poison", [&](std::map<std::string, std::string>& art) {
    auto [dp, m] = poison_dataset(d_c, refs, gen, cfg.gamma, cfg.target_label, cfg.seed,
                                  cfg.nmi(), cfg.selection(), cfg.stratified_split);
    fs::create_directories(poison_dir);
    save_dataset(dp, poison_dir + "/dataset");
    save_manifest(m, manifest_path);
    write_usage_histogram(refs, poison_dir + "/reference_usage.csv");
    art[manifest_path] = file_sha256(manifest_path);
  });
  PoisonManifest manifest = load_manifest(manifest_path);
  Dataset d_p = load_dataset(poison_dir + "/dataset", cfg.resolution, DatasetRole::Poisoned);
  for (auto& s : d_p.samples)
    if (const PoisonEntry* e = manifest.find(s.sample_id)) {
      s.label = manifest.target_label;
      s.provenance = {true, e->reference_id, e->generator_version};
    }
  // Directory layout reassigns labels from folder names; restore the
  // poisoned relabeling from the manifest.
  replay_usage_counts(refs, manifest);

  std::string best_ckpt = cfg.out_dir + "/train/target_best.ckpt";
  std::string final_gen_ckpt = cfg.out_dir + "/train/gen_final.ckpt";
  std::string final_manifest = cfg.out_dir + "/train/manifest_final.json";
  std::string report_path = cfg.out_dir + "/eval/report.json";
  TargetModel<real> model(d_c.num_classes, cfg.model_base, cfg.seed + 1);
  bool trained = false;
  stage("train", [&](std::map<std::string, std::string>& art) {
    GanTrainData<real> d_t = build_gan_train_data(cfg);
    std::pair<Dataset, PoisonManifest> preset{d_p, manifest};
    AttackArtifacts<real> out =
        run_makeupattack(gen, model, d_t, d_c, d_test, refs, acfg, &preset);
    gen.save(final_gen_ckpt);
    save_manifest(out.manifest, final_manifest);
    manifest = out.manifest;
    fs::create_directories(cfg.out_dir + "/eval");
    std::ofstream rf(report_path);
    rf << nlohmann::json{{"asr", out.report.asr},
                         {"ba", out.report.ba},
                         {"inference_reference", out.report.inference_reference_id},
                         {"config", out.report.config}}
              .dump(2)
       << "\n";
    write_prediction_log(out.report, cfg.out_dir + "/eval/predictions.csv");
    rec.attack_summary = {{"asr", out.report.asr}, {"ba", out.report.ba}};
    for (const std::string& p : {best_ckpt, final_gen_ckpt, final_manifest, report_path})
      art[p] = file_sha256(p);
    trained = true;
  });
  if (!trained) {
    model = TargetModel<real>::load(best_ckpt);
    gen = GeneratorBundle<real>::load(final_gen_ckpt);
    manifest = load_manifest(final_manifest);
    replay_usage_counts(refs, manifest);
    std::ifstream rf(report_path);
    nlohmann::json rj = nlohmann::json::parse(rf);
    rec.attack_summary = {{"asr", rj.at("asr")}, {"ba", rj.at("ba")}};
  }

  // Carry summaries forward from a previous record when stages are skipped.
  if (fs::exists(cfg.out_dir + "/run_record.json")) {
    std::ifstream prev(cfg.out_dir + "/run_record.json");
    nlohmann::json pj = nlohmann::json::parse(prev, nullptr, false);
    if (!pj.is_discarded() && pj.contains("defense_summary"))
      rec.defense_summary = pj.at("defense_summary");
  }

  stage("defenses", [&](std::map<std::string, std::string>& art) {
    rec.defense_summary =
        run_defenses(cfg, model, gen, refs, d_c, d_test, cfg.out_dir + "/defenses", art);
    std::string fp = cfg.out_dir + "/defenses/features.csv";
    export_features(model, d_p, &manifest, fp);
    art[fp] = file_sha256(fp);
  });

  std::ofstream f(cfg.out_dir + "/run_record.json");
  f << rec.to_json().dump(2) << "\n";
  return rec;
}

}  // namespace makeup
