#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "makeup/attack/pipeline.hpp"

namespace makeup {

struct DefenseToggles {
  bool strip = true, spectral = true, fine_prune = true, clp = true, neural_cleanse = true,
       gradcam = true;
  int strip_n = 100;
  std::string fine_prune_layer = "conv7";
  double fine_prune_budget = 4.0;
  double clp_u = 3.0;
  int nc_epochs = 100;
  double nc_lr = 0.005;
  int nc_opt_samples = 20;  // clean samples used for trigger reversal
};

// Full run configuration. JSON schema mirrors the field names below;
// every field has a default so partial configs are valid.
struct ExperimentConfig {
  // data
  std::string gen_train_dir;   // non-makeup sources for generator training
  std::string train_dir;       // clean classification training set D_c
  std::string test_dir;        // clean test set
  std::string reference_dir;   // makeup reference images
  int resolution = 64;
  int max_gen_sources = 16;    // cap on generator-training source images
  int max_references = 16;

  // models
  int model_base = 8;
  int gen_base = 8, rect_growth = 8, rect_depth = 1;
  bool use_rectifier = true;

  // attack
  double gamma = 0.1;
  int target_label = 0;
  int epochs = 60;
  std::vector<int> interception_epochs{30};
  double lr = 0.01, lr_decay_factor = 0.1;
  int lr_decay_period = 50;
  double momentum = 0.9, weight_decay = 5e-4;
  int batch_size = 16;
  bool augment = true;
  std::string selection_mode = "NMI";  // NMI | SSIM | RAND
  bool stratified_split = false;
  int guidance_count = 3;
  double noise_std = 0.05;
  int noise_draws = 2;
  double val_frac = 0.1;
  int ssim_window = 11;

  // nmi
  int nmi_bins = 64;
  std::string nmi_channel_mode = "luma";  // luma | mean-rgb

  // generator training
  int gan_epochs = 5, gan_batch = 2;
  double gan_lr = 2e-4, gan_beta1 = 0.5, gan_beta2 = 0.999;
  int finetune_epochs = 2;
  double per_weight_g = 1.0, per_weight_r = 1.0;
  bool literal_reg_norm = false;
  LossWeights weights;

  DefenseToggles defenses;
  uint64_t seed = 1;
  bool deterministic = true;
  std::string out_dir = "out";

  SelectionMode selection() const {
    if (selection_mode == "NMI") return SelectionMode::Nmi;
    if (selection_mode == "SSIM") return SelectionMode::Ssim;
    if (selection_mode == "RAND") return SelectionMode::Rand;
    throw std::invalid_argument("unknown selection_mode: " + selection_mode);
  }

  NmiConfig nmi() const {
    NmiConfig c;
    c.bins = nmi_bins;
    if (nmi_channel_mode == "luma")
      c.channel_mode = ChannelMode::Luma;
    else if (nmi_channel_mode == "mean-rgb")
      c.channel_mode = ChannelMode::MeanRgb;
    else
      throw std::invalid_argument("unknown nmi_channel_mode: " + nmi_channel_mode);
    return c;
  }

  AttackConfig attack() const {
    AttackConfig a;
    a.gamma = gamma;
    a.target_label = target_label;
    a.seed = seed;
    a.nmi = nmi();
    a.selection = selection();
    a.stratified_split = stratified_split;
    a.schedule.total_epochs = epochs;
    a.schedule.interception_epochs = interception_epochs;
    a.schedule.lr = lr;
    a.schedule.lr_decay_factor = lr_decay_factor;
    a.schedule.lr_decay_period = lr_decay_period;
    a.schedule.momentum = momentum;
    a.schedule.weight_decay = weight_decay;
    a.schedule.batch_size = batch_size;
    a.schedule.augment = augment;
    a.pretrain.epochs = gan_epochs;
    a.pretrain.batch_size = gan_batch;
    a.pretrain.lr = gan_lr;
    a.pretrain.beta1 = gan_beta1;
    a.pretrain.beta2 = gan_beta2;
    a.pretrain.weights = weights;
    a.pretrain.seed = seed;
    a.pretrain.use_rectifier = use_rectifier;
    a.pretrain.literal_reg_norm = literal_reg_norm;
    a.finetune = a.pretrain;
    a.finetune.epochs = finetune_epochs;
    a.finetune.weights.per_g = per_weight_g;
    a.finetune.weights.per_r = per_weight_r;
    a.guidance_count = guidance_count;
    a.noise_std = noise_std;
    a.noise_draws = noise_draws;
    a.val_frac = val_frac;
    return a;
  }

  void validate() const {
    selection();
    nmi();
    attack().schedule.validate();
    weights.validate();
    if (resolution <= 0) throw std::invalid_argument("resolution must be positive");
    if (ssim_window != 11)
      throw std::invalid_argument("SSIM supports the standard 11-pixel window only");
    for (const std::string* p : {&gen_train_dir, &train_dir, &test_dir, &reference_dir})
      if (!p->empty() && !std::filesystem::is_directory(*p))
        throw std::invalid_argument("configured path missing: " + *p);
  }
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  return {
      {"data",
       {{"gen_train_dir", c.gen_train_dir},
        {"train_dir", c.train_dir},
        {"test_dir", c.test_dir},
        {"reference_dir", c.reference_dir},
        {"resolution", c.resolution},
        {"max_gen_sources", c.max_gen_sources},
        {"max_references", c.max_references}}},
      {"model", {{"base", c.model_base}}},
      {"generator",
       {{"base", c.gen_base},
        {"rect_growth", c.rect_growth},
        {"rect_depth", c.rect_depth},
        {"use_rectifier", c.use_rectifier}}},
      {"attack",
       {{"gamma", c.gamma},
        {"target_label", c.target_label},
        {"epochs", c.epochs},
        {"interception_epochs", c.interception_epochs},
        {"lr", c.lr},
        {"lr_decay_factor", c.lr_decay_factor},
        {"lr_decay_period", c.lr_decay_period},
        {"momentum", c.momentum},
        {"weight_decay", c.weight_decay},
        {"batch_size", c.batch_size},
        {"augment", c.augment},
        {"selection_mode", c.selection_mode},
        {"stratified_split", c.stratified_split},
        {"guidance_count", c.guidance_count},
        {"noise_std", c.noise_std},
        {"noise_draws", c.noise_draws},
        {"val_frac", c.val_frac},
        {"ssim_window", c.ssim_window}}},
      {"nmi", {{"bins", c.nmi_bins}, {"channel_mode", c.nmi_channel_mode}}},
      {"gan",
       {{"epochs", c.gan_epochs},
        {"batch_size", c.gan_batch},
        {"lr", c.gan_lr},
        {"beta1", c.gan_beta1},
        {"beta2", c.gan_beta2},
        {"finetune_epochs", c.finetune_epochs},
        {"per_weight_g", c.per_weight_g},
        {"per_weight_r", c.per_weight_r},
        {"literal_reg_norm", c.literal_reg_norm},
        {"weights",
         {{"adv_d", c.weights.adv_d},
          {"adv_g", c.weights.adv_g},
          {"cyc_g", c.weights.cyc_g},
          {"mk_g", c.weights.mk_g},
          {"reg_g", c.weights.reg_g},
          {"adv_r", c.weights.adv_r},
          {"mk_r", c.weights.mk_r},
          {"reg_r", c.weights.reg_r}}}}},
      {"defenses",
       {{"strip", c.defenses.strip},
        {"spectral", c.defenses.spectral},
        {"fine_prune", c.defenses.fine_prune},
        {"clp", c.defenses.clp},
        {"neural_cleanse", c.defenses.neural_cleanse},
        {"gradcam", c.defenses.gradcam},
        {"strip_n", c.defenses.strip_n},
        {"fine_prune_layer", c.defenses.fine_prune_layer},
        {"fine_prune_budget", c.defenses.fine_prune_budget},
        {"clp_u", c.defenses.clp_u},
        {"nc_epochs", c.defenses.nc_epochs},
        {"nc_lr", c.defenses.nc_lr},
        {"nc_opt_samples", c.defenses.nc_opt_samples}}},
      {"seed", c.seed},
      {"deterministic", c.deterministic},
      {"out_dir", c.out_dir}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  auto get = [](const nlohmann::json& o, const char* k, auto& dst) {
    if (o.contains(k)) dst = o.at(k).get<std::decay_t<decltype(dst)>>();
  };
  if (j.contains("data")) {
    const auto& d = j.at("data");
    get(d, "gen_train_dir", c.gen_train_dir);
    get(d, "train_dir", c.train_dir);
    get(d, "test_dir", c.test_dir);
    get(d, "reference_dir", c.reference_dir);
    get(d, "resolution", c.resolution);
    get(d, "max_gen_sources", c.max_gen_sources);
    get(d, "max_references", c.max_references);
  }
  if (j.contains("model")) get(j.at("model"), "base", c.model_base);
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    get(g, "base", c.gen_base);
    get(g, "rect_growth", c.rect_growth);
    get(g, "rect_depth", c.rect_depth);
    get(g, "use_rectifier", c.use_rectifier);
  }
  if (j.contains("attack")) {
    const auto& a = j.at("attack");
    get(a, "gamma", c.gamma);
    get(a, "target_label", c.target_label);
    get(a, "epochs", c.epochs);
    get(a, "interception_epochs", c.interception_epochs);
    get(a, "lr", c.lr);
    get(a, "lr_decay_factor", c.lr_decay_factor);
    get(a, "lr_decay_period", c.lr_decay_period);
    get(a, "momentum", c.momentum);
    get(a, "weight_decay", c.weight_decay);
    get(a, "batch_size", c.batch_size);
    get(a, "augment", c.augment);
    get(a, "selection_mode", c.selection_mode);
    get(a, "stratified_split", c.stratified_split);
    get(a, "guidance_count", c.guidance_count);
    get(a, "noise_std", c.noise_std);
    get(a, "noise_draws", c.noise_draws);
    get(a, "val_frac", c.val_frac);
    get(a, "ssim_window", c.ssim_window);
  }
  if (j.contains("nmi")) {
    get(j.at("nmi"), "bins", c.nmi_bins);
    get(j.at("nmi"), "channel_mode", c.nmi_channel_mode);
  }
  if (j.contains("gan")) {
    const auto& g = j.at("gan");
    get(g, "epochs", c.gan_epochs);
    get(g, "batch_size", c.gan_batch);
    get(g, "lr", c.gan_lr);
    get(g, "beta1", c.gan_beta1);
    get(g, "beta2", c.gan_beta2);
    get(g, "finetune_epochs", c.finetune_epochs);
    get(g, "per_weight_g", c.per_weight_g);
    get(g, "per_weight_r", c.per_weight_r);
    get(g, "literal_reg_norm", c.literal_reg_norm);
    if (g.contains("weights")) {
      const auto& w = g.at("weights");
      get(w, "adv_d", c.weights.adv_d);
      get(w, "adv_g", c.weights.adv_g);
      get(w, "cyc_g", c.weights.cyc_g);
      get(w, "mk_g", c.weights.mk_g);
      get(w, "reg_g", c.weights.reg_g);
      get(w, "adv_r", c.weights.adv_r);
      get(w, "mk_r", c.weights.mk_r);
      get(w, "reg_r", c.weights.reg_r);
    }
  }
  if (j.contains("defenses")) {
    const auto& d = j.at("defenses");
    get(d, "strip", c.defenses.strip);
    get(d, "spectral", c.defenses.spectral);
    get(d, "fine_prune", c.defenses.fine_prune);
    get(d, "clp", c.defenses.clp);
    get(d, "neural_cleanse", c.defenses.neural_cleanse);
    get(d, "gradcam", c.defenses.gradcam);
    get(d, "strip_n", c.defenses.strip_n);
    get(d, "fine_prune_layer", c.defenses.fine_prune_layer);
    get(d, "fine_prune_budget", c.defenses.fine_prune_budget);
    get(d, "clp_u", c.defenses.clp_u);
    get(d, "nc_epochs", c.defenses.nc_epochs);
    get(d, "nc_lr", c.defenses.nc_lr);
    get(d, "nc_opt_samples", c.defenses.nc_opt_samples);
  }
  get(j, "seed", c.seed);
  get(j, "deterministic", c.deterministic);
  get(j, "out_dir", c.out_dir);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  return config_from_json(nlohmann::json::parse(f));
}

inline void save_config(const ExperimentConfig& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write config: " + path);
  f << config_to_json(c).dump(2) << "\n";
}

inline std::string config_hash(const ExperimentConfig& c) {
  return sha256_hex(config_to_json(c).dump());
}

}  // namespace makeup
