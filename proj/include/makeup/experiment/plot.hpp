#pragma once

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <string>
#include <vector>

namespace makeup {

// Minimal polyline chart: one series per vector, auto-scaled axes.
inline void plot_curves(const std::vector<std::vector<double>>& series,
                        const std::vector<std::string>& labels, const std::string& title,
                        const std::string& path, int width = 640, int height = 400) {
  const int margin = 48;
  cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  double lo = 0, hi = 1;
  bool any = false;
  size_t max_n = 0;
  for (const auto& s : series)
    for (double v : s) {
      if (!any) {
        lo = hi = v;
        any = true;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  for (const auto& s : series) max_n = std::max(max_n, s.size());
  if (hi == lo) hi = lo + 1;
  if (max_n < 2) max_n = 2;

  cv::rectangle(img, {margin, margin}, {width - margin, height - margin}, {0, 0, 0}, 1);
  cv::putText(img, title, {margin, margin - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {0, 0, 0}, 1);

  const cv::Scalar palette[] = {{180, 60, 30}, {30, 60, 180}, {30, 150, 30}, {120, 30, 150},
                                {0, 140, 200}};
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    cv::Scalar color = palette[si % 5];
    for (size_t i = 1; i < s.size(); ++i) {
      auto px = [&](size_t idx, double v) {
        int x = margin + static_cast<int>((width - 2.0 * margin) * idx / (max_n - 1));
        int y = height - margin -
                static_cast<int>((height - 2.0 * margin) * (v - lo) / (hi - lo));
        return cv::Point(x, y);
      };
      cv::line(img, px(i - 1, s[i - 1]), px(i, s[i]), color, 1, cv::LINE_AA);
    }
    if (si < labels.size())
      cv::putText(img, labels[si], {width - margin - 120, margin + 16 * (static_cast<int>(si) + 1)},
                  cv::FONT_HERSHEY_SIMPLEX, 0.4, color, 1);
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", hi);
  cv::putText(img, buf, {4, margin + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1);
  std::snprintf(buf, sizeof buf, "%.3g", lo);
  cv::putText(img, buf, {4, height - margin + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1);
  if (!cv::imwrite(path, img)) throw std::runtime_error("cannot write plot: " + path);
}

}  // namespace makeup
