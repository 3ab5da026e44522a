#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "makeup/core/tensor.hpp"

namespace makeup {

struct SpectralRecord {
  int index = 0;
  int label = 0;
  double score = 0;
};

struct SpectralReport {
  std::vector<SpectralRecord> records;  // one per input row, original order
  std::vector<int> skipped_labels;      // classes with < 2 samples

  void write_csv(const std::string& path) const {
    std::ofstream f(path);
    f << "index,label,score\n";
    for (const auto& r : records) f << r.index << ',' << r.label << ',' << r.score << "\n";
  }
};

// Per class: center the feature rows, take the top right-singular
// direction v of the centered matrix, score_i = <f_i - mean, v>^2.
inline SpectralReport spectral_scores(const std::vector<std::vector<double>>& features,
                                      const std::vector<int>& labels) {
  if (features.size() != labels.size())
    throw std::invalid_argument("spectral_scores: features/labels size mismatch");
  SpectralReport rep;
  rep.records.resize(features.size());
  for (size_t i = 0; i < features.size(); ++i)
    rep.records[i] = {static_cast<int>(i), labels[i], 0.0};

  std::map<int, std::vector<int>> by_class;
  for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));

  for (auto& [c, idxs] : by_class) {
    if (idxs.size() < 2) {
      rep.skipped_labels.push_back(c);
      continue;
    }
    int n = static_cast<int>(idxs.size());
    int d = static_cast<int>(features[static_cast<size_t>(idxs[0])].size());
    Eigen::MatrixXd m(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        m(i, j) = features[static_cast<size_t>(idxs[static_cast<size_t>(i)])][static_cast<size_t>(j)];
    Eigen::RowVectorXd mean = m.colwise().mean();
    m.rowwise() -= mean;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
    Eigen::VectorXd v = svd.matrixV().col(0);
    for (int i = 0; i < n; ++i) {
      double s = m.row(i).dot(v);
      rep.records[static_cast<size_t>(idxs[static_cast<size_t>(i)])].score = s * s;
    }
  }
  return rep;
}

// Threshold-free separation quality of scores vs. a ground-truth flag
// (probability a positive outranks a negative; ties count half).
inline double score_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  double wins = 0;
  int64_t pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return pairs ? wins / static_cast<double>(pairs) : 0.0;
}

}  // namespace makeup
