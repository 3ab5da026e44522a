#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "makeup/experiment/plot.hpp"
#include "makeup/experiment/runner.hpp"

namespace makeup {

namespace detail {

inline std::vector<std::vector<double>> read_csv_columns(const std::string& path,
                                                         std::vector<std::string>& header) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open csv: " + path);
  std::string line;
  std::getline(f, line);
  header.clear();
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) header.push_back(cell);
  std::vector<std::vector<double>> cols(header.size());
  while (std::getline(f, line)) {
    std::stringstream ls(line);
    size_t i = 0;
    while (std::getline(ls, cell, ',') && i < cols.size()) {
      try {
        cols[i].push_back(std::stod(cell));
      } catch (...) {
        cols[i].push_back(0.0);
      }
      ++i;
    }
  }
  return cols;
}

}  // namespace detail

// Renders run_record.json + stage CSVs of one (or two, for the
// no-fine-tuning comparison) run directories into a markdown summary
// with curve plots.
inline void emit_report(const std::string& run_dir, const std::string& out_dir,
                        const std::string& compare_run_dir = "") {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto load_record = [](const std::string& dir) {
    std::ifstream f(dir + "/run_record.json");
    if (!f) throw std::runtime_error("no run_record.json in " + dir);
    return nlohmann::json::parse(f);
  };
  nlohmann::json rec = load_record(run_dir);

  std::ofstream md(out_dir + "/report.md");
  md << "# Attack run report\n\nconfig hash: `" << rec.value("config_hash", std::string("?"))
     << "`\n\n## Attack results\n\n| run | ASR (%) | BA (%) |\n|---|---|---|\n";
  auto row = [&](const std::string& name, const nlohmann::json& r) {
    const auto& a = r.at("attack_summary");
    md << "| " << name << " | " << a.value("asr", 0.0) << " | " << a.value("ba", 0.0) << " |\n";
  };
  row("this run", rec);
  if (!compare_run_dir.empty()) row("comparison run", load_record(compare_run_dir));

  md << "\n## Stages\n\n| stage | status |\n|---|---|\n";
  for (const auto& s : rec.at("stages"))
    md << "| " << s.value("name", std::string()) << " | " << s.value("status", std::string())
       << " |\n";

  if (rec.contains("defense_summary") && !rec.at("defense_summary").empty()) {
    md << "\n## Defenses\n\n";
    for (const auto& [k, v] : rec.at("defense_summary").items())
      md << "- **" << k << "**: `" << v.dump() << "`\n";
  }

  std::string curve = run_dir + "/train/target_curve.csv";
  if (fs::exists(curve)) {
    std::vector<std::string> hdr;
    auto cols = detail::read_csv_columns(curve, hdr);
    if (cols.size() >= 4) {
      plot_curves({cols[2], cols[3]}, {"train_acc", "val_acc"}, "target training",
                  out_dir + "/target_curve.png");
      plot_curves({cols[1]}, {"loss"}, "target loss", out_dir + "/target_loss.png");
      md << "\n## Curves\n\n![accuracy](target_curve.png)\n\n![loss](target_loss.png)\n";
    }
  }
  std::string gcurve = run_dir + "/pretrain/curve.csv";
  if (fs::exists(gcurve)) {
    std::vector<std::string> hdr;
    auto cols = detail::read_csv_columns(gcurve, hdr);
    if (cols.size() >= 4) {
      plot_curves({cols[1], cols[2], cols[3]}, {"l_d", "l_g", "l_r"}, "generator pre-training",
                  out_dir + "/gan_curve.png");
      md << "\n![gan](gan_curve.png)\n";
    }
  }
}

// One full attack run per selection mode with a shared seed; emits an
// ASR/BA comparison table.
inline nlohmann::json ablate_selection(ExperimentConfig cfg, const std::vector<std::string>& modes,
                                       const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  nlohmann::json table = nlohmann::json::array();
  std::ofstream csv(out_dir + "/selection_ablation.csv");
  csv << "mode,asr,ba\n";
  for (const std::string& mode : modes) {
    ExperimentConfig mc = cfg;
    mc.selection_mode = mode;  // throws on unknown mode inside validate()
    mc.out_dir = out_dir + "/mode_" + mode;
    RunRecord rec = run_experiment(mc);
    double asr = rec.attack_summary.value("asr", 0.0);
    double ba = rec.attack_summary.value("ba", 0.0);
    table.push_back({{"mode", mode}, {"asr", asr}, {"ba", ba}});
    csv << mode << ',' << asr << ',' << ba << "\n";
  }
  std::ofstream jf(out_dir + "/selection_ablation.json");
  jf << table.dump(2) << "\n";
  return table;
}

// Rectifier on/off pair under one seed.
inline nlohmann::json ablate_rectifier(ExperimentConfig cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  nlohmann::json table = nlohmann::json::array();
  std::ofstream csv(out_dir + "/rectifier_ablation.csv");
  csv << "use_rectifier,asr,ba\n";
  for (bool on : {true, false}) {
    ExperimentConfig mc = cfg;
    mc.use_rectifier = on;
    mc.out_dir = out_dir + (on ? "/rect_on" : "/rect_off");
    RunRecord rec = run_experiment(mc);
    double asr = rec.attack_summary.value("asr", 0.0);
    double ba = rec.attack_summary.value("ba", 0.0);
    table.push_back({{"use_rectifier", on}, {"asr", asr}, {"ba", ba}});
    csv << (on ? 1 : 0) << ',' << asr << ',' << ba << "\n";
  }
  std::ofstream jf(out_dir + "/rectifier_ablation.json");
  jf << table.dump(2) << "\n";
  return table;
}

}  // namespace makeup
