#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "makeup/attack/trainer.hpp"
#include "makeup/data/manifest.hpp"
#include "makeup/gan/train.hpp"
#include "makeup/poison/poisoner.hpp"

namespace makeup {

// Pipeline failures carry the stage they happened in:
// {pretrain, poison, train, finetune, update, eval}.
struct StageError : std::runtime_error {
  std::string stage;
  StageError(std::string stage_, const std::string& msg)
      : std::runtime_error("[" + stage_ + "] " + msg), stage(std::move(stage_)) {}
};

struct AttackConfig {
  double gamma = 0.1;
  int target_label = 0;
  uint64_t seed = 1;
  NmiConfig nmi;
  SelectionMode selection = SelectionMode::Nmi;
  bool stratified_split = false;
  TrainSchedule schedule;
  GanTrainConfig pretrain;   // perceptual weights must stay zero here
  GanTrainConfig finetune;   // per_g/per_r weights used at interceptions
  int guidance_count = 3;
  double noise_std = 0.05;
  int noise_draws = 2;
  double val_frac = 0.1;
  std::string out_dir;       // stage-tagged checkpoint tree when set
  bool per_sample_inference_reference = false;  // ablation: NMI selection at test time
};

template <class T>
struct AttackArtifacts {
  Dataset d_p;
  PoisonManifest manifest;
  BestCheckpoint<T> best;
  std::vector<TrainEpochLog> train_logs;
  std::vector<std::vector<GanEpochLog>> finetune_logs;
  AttackReport report;
};

namespace detail {
template <class F>
auto run_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}
}  // namespace detail

// Variant of evaluate_asr_ba that re-selects the reference per test
// sample with NMI (test-time ablation flag).
template <class T>
inline AttackReport evaluate_asr_ba_per_sample(TargetModel<T>& model, const Dataset& d_test,
                                               GeneratorBundle<T>& gen, ReferenceSet& refs,
                                               int target_label, const NmiConfig& cfg) {
  if (d_test.samples.empty()) throw std::invalid_argument("evaluate: empty test set");
  AttackReport rep;
  rep.inference_reference_id = "(per-sample)";
  int clean_correct = 0, hits = 0, total = 0;
  for (const auto& s : d_test.samples) {
    int pred = model.predict(s.pixels.template cast<T>());
    rep.predictions.push_back({s.sample_id, s.label, pred, false});
    if (pred == s.label) ++clean_correct;
    if (s.label != target_label) {
      ReferenceSet probe = refs;  // do not disturb training usage counts
      int ri = select_reference_index(s.pixels, probe, cfg, SelectionMode::Nmi);
      Tensor<T> trig = gen.transfer(
          s.pixels.template cast<T>(),
          refs.references[static_cast<size_t>(ri)].pixels.template cast<T>());
      int tpred = model.predict(trig);
      rep.predictions.push_back({s.sample_id, s.label, tpred, true});
      if (tpred == target_label) ++hits;
      ++total;
    }
  }
  rep.ba = 100.0 * clean_correct / static_cast<double>(d_test.samples.size());
  rep.asr = total ? 100.0 * hits / static_cast<double>(total) : 0.0;
  return rep;
}

// Full attack loop: pretrain G, poison D_c, train M/C, and at every
// interception epoch fine-tune G against the best saved target model
// (black-box: forward queries only) then regenerate the poisoned subset.
// An empty interception list is the no-fine-tuning variant.
template <class T>
inline AttackArtifacts<T> run_makeupattack(GeneratorBundle<T>& gen, TargetModel<T>& model,
                                           const GanTrainData<T>& d_t, const Dataset& d_c,
                                           const Dataset& d_test, ReferenceSet& refs,
                                           const AttackConfig& cfg,
                                           const std::pair<Dataset, PoisonManifest>*
                                               preset_poison = nullptr) {
  namespace fs = std::filesystem;
  cfg.schedule.validate();
  AttackArtifacts<T> art;
  auto stage_dir = [&](const std::string& name) -> std::string {
    if (cfg.out_dir.empty()) return "";
    std::string d = cfg.out_dir + "/" + name;
    fs::create_directories(d);
    return d;
  };

  detail::run_stage("pretrain", [&] {
    if (gen.version >= 1) return;  // caller supplied a pretrained generator
    GanTrainConfig pc = cfg.pretrain;
    pc.checkpoint_dir = stage_dir("pretrain");
    pretrain_generator(gen, d_t, pc);
  });

  detail::run_stage("poison", [&] {
    if (preset_poison) {
      art.d_p = preset_poison->first;
      art.manifest = preset_poison->second;
      return;
    }
    auto [dp, m] = poison_dataset(d_c, refs, gen, cfg.gamma, cfg.target_label, cfg.seed,
                                  cfg.nmi, cfg.selection, cfg.stratified_split);
    art.d_p = std::move(dp);
    art.manifest = std::move(m);
    std::string dir = stage_dir("poison");
    if (!dir.empty()) {
      save_manifest(art.manifest, dir + "/manifest.json");
      write_usage_histogram(refs, dir + "/reference_usage.csv");
    }
  });

  auto [train_idx, val_idx] = stratified_val_split(d_c, cfg.val_frac, cfg.seed);
  (void)train_idx;  // training covers all of D_p; validation is on clean images

  std::vector<Tensor<T>> guidance;
  for (const auto& s : d_c.samples)
    if (s.label == cfg.target_label &&
        static_cast<int>(guidance.size()) < cfg.guidance_count)
      guidance.push_back(s.pixels.template cast<T>());

  std::string train_dir = stage_dir("train");
  std::string curve = train_dir.empty() ? "" : train_dir + "/target_curve.csv";
  nn::Sgd<T> opt(T(cfg.schedule.lr), T(cfg.schedule.momentum), T(cfg.schedule.weight_decay));

  // Interception epochs partition [1, E] into training segments.
  std::vector<int> stops = cfg.schedule.interception_epochs;
  stops.push_back(cfg.schedule.total_epochs);
  int done = 0;
  for (size_t seg = 0; seg < stops.size(); ++seg) {
    int stop = stops[seg];
    uint64_t gen_hash_before = nn::param_hash(gen.params_g());
    detail::run_stage("train", [&] {
      auto logs = train_target(model, art.d_p, cfg.schedule, cfg.seed, d_c, val_idx, art.best,
                               done, stop - done, &opt, curve);
      art.train_logs.insert(art.train_logs.end(), logs.begin(), logs.end());
    });
    if (nn::param_hash(gen.params_g()) != gen_hash_before)
      throw StageError("train", "generator parameters mutated during target training");
    done = stop;
    if (seg + 1 == stops.size()) break;  // final segment: no interception after E

    // Fine-tune against the best checkpoint so far, black-box.
    TargetModel<T> frozen = model;
    restore_params(frozen.params_all(), art.best.values);
    uint64_t target_hash = model.feature_param_hash();
    detail::run_stage("finetune", [&] {
      FineTuneContext<T> ctx;
      ctx.extractor = frozen.frozen_feature_fn();
      ctx.guidance = guidance;
      ctx.noise_std = cfg.noise_std;
      ctx.noise_draws_per_fake = cfg.noise_draws;
      GanTrainConfig fc = cfg.finetune;
      fc.checkpoint_dir = stage_dir("finetune_e" + std::to_string(done));
      art.finetune_logs.push_back(finetune_generator(gen, d_t, fc, ctx));
    });
    if (model.feature_param_hash() != target_hash)
      throw StageError("finetune", "target parameters mutated during generator fine-tuning");

    detail::run_stage("update", [&] {
      auto [dp2, m2] = update_poisoned_dataset(art.d_p, art.manifest, d_c, refs, gen, cfg.nmi,
                                               cfg.selection, cfg.seed + static_cast<uint64_t>(done));
      art.d_p = std::move(dp2);
      art.manifest = std::move(m2);
      std::string dir = stage_dir("update_e" + std::to_string(done));
      if (!dir.empty()) save_manifest(art.manifest, dir + "/manifest.json");
    });
  }

  detail::run_stage("eval", [&] {
    // Deployment uses the optimal (best benign-validation) checkpoint.
    if (!art.best.values.empty()) restore_params(model.params_all(), art.best.values);
    if (!train_dir.empty()) model.save(train_dir + "/target_best.ckpt", art.best.epoch);
    art.report = cfg.per_sample_inference_reference
                     ? evaluate_asr_ba_per_sample(model, d_test, gen, refs, cfg.target_label,
                                                  cfg.nmi)
                     : evaluate_asr_ba(model, d_test, gen, refs, cfg.target_label);
    art.report.config = {{"gamma", cfg.gamma},
                         {"target_label", cfg.target_label},
                         {"seed", cfg.seed},
                         {"epochs", cfg.schedule.total_epochs},
                         {"interception_epochs", cfg.schedule.interception_epochs},
                         {"best_val_epoch", art.best.epoch}};
  });
  return art;
}

inline void write_prediction_log(const AttackReport& rep, const std::string& path) {
  std::ofstream f(path);
  f << "sample_id,true_label,predicted,triggered\n";
  for (const auto& p : rep.predictions)
    f << p.sample_id << ',' << p.true_label << ',' << p.predicted << ',' << (p.triggered ? 1 : 0)
      << "\n";
}

}  // namespace makeup
