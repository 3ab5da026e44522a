// Command-line front end for the makeup-transfer backdoor toolkit.
#include <CLI11.hpp>
#include <iostream>

#include "makeup/makeup.hpp"

using namespace makeup;

namespace {

struct GlobalOpts {
  std::string config_path;
  int64_t seed = -1;
  bool deterministic = false;
  std::string out_dir;
};

ExperimentConfig resolve_config(const GlobalOpts& g) {
  ExperimentConfig cfg;
  if (!g.config_path.empty()) cfg = load_config(g.config_path);
  if (g.seed >= 0) cfg.seed = static_cast<uint64_t>(g.seed);
  if (g.deterministic) cfg.deterministic = true;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  return cfg;
}

std::string gen_ckpt_path(const ExperimentConfig& cfg) {
  return cfg.out_dir + "/pretrain/gen_latest.ckpt";
}

GeneratorBundle<real> load_gen(const ExperimentConfig& cfg) {
  std::string latest = cfg.out_dir + "/train/gen_final.ckpt";
  if (std::filesystem::exists(latest)) return GeneratorBundle<real>::load(latest);
  return GeneratorBundle<real>::load(gen_ckpt_path(cfg));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MakeupAttack: makeup-transfer backdoor attack and defense toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "experiment config JSON");
  app.add_option("--seed", g.seed, "override config seed");
  app.add_flag("--deterministic", g.deterministic, "force deterministic mode");
  app.add_option("--out", g.out_dir, "override output directory");

  auto* c_synth = app.add_subcommand("make-synthetic", "generate a synthetic face corpus");
  int s_ids = 10, s_train = 50, s_test = 10, s_gen = 16, s_refs = 16, s_res = 64;
  std::string s_root = "data";
  c_synth->add_option("--root", s_root, "corpus root directory");
  c_synth->add_option("--identities", s_ids);
  c_synth->add_option("--train-per-id", s_train);
  c_synth->add_option("--test-per-id", s_test);
  c_synth->add_option("--gen-sources", s_gen);
  c_synth->add_option("--references", s_refs);
  c_synth->add_option("--resolution", s_res);

  auto* c_pre = app.add_subcommand("pretrain-gen", "pre-train the trigger generator");
  auto* c_poison = app.add_subcommand("poison", "poison the training set (adaptive selection)");
  auto* c_train = app.add_subcommand("train-target", "train the target model on poisoned data");
  auto* c_ft = app.add_subcommand("finetune-gen", "fine-tune the generator against a checkpoint");
  std::string ft_model_ckpt;
  c_ft->add_option("--model", ft_model_ckpt, "target model checkpoint (default: best)");
  auto* c_upd = app.add_subcommand("update-poison", "regenerate the poisoned subset");
  auto* c_attack = app.add_subcommand("attack", "full attack pipeline (resumable stages)");
  auto* c_defend = app.add_subcommand("defend", "run one defense against run artifacts");
  std::string defend_method;
  c_defend
      ->add_option("method", defend_method,
                   "strip | spectral | fine-prune | clp | neural-cleanse | gradcam")
      ->required();
  auto* c_ablate = app.add_subcommand("ablate", "selection-mode / rectifier ablations");
  std::string ablate_what = "selection";
  std::vector<std::string> ablate_modes{"NMI", "SSIM", "RAND"};
  c_ablate->add_option("--what", ablate_what, "selection | rectifier");
  c_ablate->add_option("--modes", ablate_modes, "selection modes to compare");
  auto* c_report = app.add_subcommand("report", "render a run directory into a report bundle");
  std::string report_compare;
  c_report->add_option("--compare", report_compare, "second run directory for comparison");
  auto* c_export = app.add_subcommand("export-features", "dump per-sample embeddings to CSV");
  std::string export_dataset, export_out = "features.csv";
  c_export->add_option("--dataset", export_dataset, "dataset dir (default: poisoned train)");
  c_export->add_option("--output", export_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_synth->parsed()) {
      uint64_t seed = g.seed >= 0 ? static_cast<uint64_t>(g.seed) : 1;
      write_synthetic_corpus(s_root, s_ids, s_train, s_test, s_gen, s_refs, s_res, seed);
      std::cout << "wrote corpus under " << s_root << "\n";
      return 0;
    }

    ExperimentConfig cfg = resolve_config(g);

    if (c_pre->parsed()) {
      cfg.validate();
      GeneratorBundle<real> gen(cfg.gen_base, cfg.rect_growth, cfg.rect_depth, cfg.seed);
      GanTrainData<real> d_t = build_gan_train_data(cfg);
      GanTrainConfig pc = cfg.attack().pretrain;
      pc.checkpoint_dir = cfg.out_dir + "/pretrain";
      pc.curve_csv = cfg.out_dir + "/pretrain/curve.csv";
      pretrain_generator(gen, d_t, pc);
      std::cout << "generator v" << gen.version << " saved to " << gen_ckpt_path(cfg) << "\n";
    } else if (c_poison->parsed()) {
      cfg.validate();
      GeneratorBundle<real> gen = GeneratorBundle<real>::load(gen_ckpt_path(cfg));
      Dataset d_c = load_dataset(cfg.train_dir, cfg.resolution);
      ReferenceSet refs = build_reference_set(cfg);
      auto [dp, m] = poison_dataset(d_c, refs, gen, cfg.gamma, cfg.target_label, cfg.seed,
                                    cfg.nmi(), cfg.selection(), cfg.stratified_split);
      std::string dir = cfg.out_dir + "/poison";
      std::filesystem::create_directories(dir);
      save_dataset(dp, dir + "/dataset");
      save_manifest(m, dir + "/manifest.json");
      write_usage_histogram(refs, dir + "/reference_usage.csv");
      std::cout << m.entries.size() << " samples poisoned; manifest at " << dir
                << "/manifest.json\n";
    } else if (c_train->parsed()) {
      cfg.validate();
      Dataset d_c = load_dataset(cfg.train_dir, cfg.resolution);
      PoisonManifest m = load_manifest(cfg.out_dir + "/poison/manifest.json");
      Dataset d_p = load_dataset(cfg.out_dir + "/poison/dataset", cfg.resolution,
                                 DatasetRole::Poisoned);
      for (auto& s : d_p.samples)
        if (m.find(s.sample_id)) s.label = m.target_label;
      TargetModel<real> model(d_c.num_classes, cfg.model_base, cfg.seed + 1);
      auto [tr, val] = stratified_val_split(d_c, cfg.val_frac, cfg.seed);
      (void)tr;
      BestCheckpoint<real> best;
      TrainSchedule sched = cfg.attack().schedule;
      sched.interception_epochs.clear();  // plain training; interception via `attack`
      std::filesystem::create_directories(cfg.out_dir + "/train");
      train_target(model, d_p, sched, cfg.seed, d_c, val, best, 0, -1, static_cast<nn::Sgd<real>*>(nullptr),
                   cfg.out_dir + "/train/target_curve.csv");
      restore_params(model.params_all(), best.values);
      model.save(cfg.out_dir + "/train/target_best.ckpt", best.epoch);
      std::cout << "best validation accuracy " << best.val_acc << " at epoch " << best.epoch
                << "\n";
    } else if (c_ft->parsed()) {
      cfg.validate();
      GeneratorBundle<real> gen = load_gen(cfg);
      std::string mp =
          ft_model_ckpt.empty() ? cfg.out_dir + "/train/target_best.ckpt" : ft_model_ckpt;
      TargetModel<real> frozen = TargetModel<real>::load(mp);
      Dataset d_c = load_dataset(cfg.train_dir, cfg.resolution);
      FineTuneContext<real> ctx;
      ctx.extractor = frozen.frozen_feature_fn();
      for (const auto& s : d_c.samples)
        if (s.label == cfg.target_label &&
            static_cast<int>(ctx.guidance.size()) < cfg.guidance_count)
          ctx.guidance.push_back(s.pixels);
      ctx.noise_std = cfg.noise_std;
      ctx.noise_draws_per_fake = cfg.noise_draws;
      GanTrainData<real> d_t = build_gan_train_data(cfg);
      GanTrainConfig fc = cfg.attack().finetune;
      fc.checkpoint_dir = cfg.out_dir + "/finetune";
      finetune_generator(gen, d_t, fc, ctx);
      gen.save(cfg.out_dir + "/train/gen_final.ckpt");
      std::cout << "generator fine-tuned to v" << gen.version << "\n";
    } else if (c_upd->parsed()) {
      cfg.validate();
      GeneratorBundle<real> gen = load_gen(cfg);
      Dataset d_c = load_dataset(cfg.train_dir, cfg.resolution);
      PoisonManifest m = load_manifest(cfg.out_dir + "/poison/manifest.json");
      Dataset d_p = load_dataset(cfg.out_dir + "/poison/dataset", cfg.resolution,
                                 DatasetRole::Poisoned);
      for (auto& s : d_p.samples)
        if (m.find(s.sample_id)) s.label = m.target_label;
      ReferenceSet refs = build_reference_set(cfg);
      replay_usage_counts(refs, m);
      auto [dp2, m2] =
          update_poisoned_dataset(d_p, m, d_c, refs, gen, cfg.nmi(), cfg.selection(), cfg.seed);
      save_dataset(dp2, cfg.out_dir + "/poison/dataset");
      save_manifest(m2, cfg.out_dir + "/poison/manifest.json");
      std::cout << "updated " << m2.entries.size() << " poisoned samples to generator v"
                << gen.version << "\n";
    } else if (c_attack->parsed()) {
      RunRecord rec = run_experiment(cfg);
      std::cout << "ASR " << rec.attack_summary.value("asr", 0.0) << "%  BA "
                << rec.attack_summary.value("ba", 0.0) << "%\nrecord: " << cfg.out_dir
                << "/run_record.json\n";
    } else if (c_defend->parsed()) {
      cfg.validate();
      TargetModel<real> model = TargetModel<real>::load(cfg.out_dir + "/train/target_best.ckpt");
      GeneratorBundle<real> gen = load_gen(cfg);
      PoisonManifest m = load_manifest(cfg.out_dir + "/train/manifest_final.json");
      ReferenceSet refs = build_reference_set(cfg);
      replay_usage_counts(refs, m);
      Dataset d_c = load_dataset(cfg.train_dir, cfg.resolution);
      Dataset d_test = load_dataset(cfg.test_dir, cfg.resolution);
      DefenseToggles dt = cfg.defenses;
      dt.strip = defend_method == "strip";
      dt.spectral = defend_method == "spectral";
      dt.fine_prune = defend_method == "fine-prune";
      dt.clp = defend_method == "clp";
      dt.neural_cleanse = defend_method == "neural-cleanse";
      dt.gradcam = defend_method == "gradcam";
      if (!dt.strip && !dt.spectral && !dt.fine_prune && !dt.clp && !dt.neural_cleanse &&
          !dt.gradcam)
        throw std::invalid_argument("unknown defense method: " + defend_method);
      ExperimentConfig one = cfg;
      one.defenses = dt;
      std::map<std::string, std::string> artifacts;
      nlohmann::json summary = run_defenses(one, model, gen, refs, d_c, d_test,
                                            cfg.out_dir + "/defenses", artifacts);
      std::cout << summary.dump(2) << "\n";
    } else if (c_ablate->parsed()) {
      nlohmann::json table;
      if (ablate_what == "selection")
        table = ablate_selection(cfg, ablate_modes, cfg.out_dir + "/ablate_selection");
      else if (ablate_what == "rectifier")
        table = ablate_rectifier(cfg, cfg.out_dir + "/ablate_rectifier");
      else
        throw std::invalid_argument("unknown ablation: " + ablate_what);
      std::cout << table.dump(2) << "\n";
    } else if (c_report->parsed()) {
      emit_report(cfg.out_dir, cfg.out_dir + "/report", report_compare);
      std::cout << "report at " << cfg.out_dir << "/report/report.md\n";
    } else if (c_export->parsed()) {
      cfg.validate();
      TargetModel<real> model = TargetModel<real>::load(cfg.out_dir + "/train/target_best.ckpt");
      PoisonManifest m = load_manifest(cfg.out_dir + "/train/manifest_final.json");
      std::string droot = export_dataset.empty() ? cfg.out_dir + "/poison/dataset" : export_dataset;
      Dataset d = load_dataset(droot, cfg.resolution);
      export_features(model, d, &m, export_out);
      std::cout << "features written to " << export_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
