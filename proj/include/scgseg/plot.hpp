#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "json.hpp"
#include "scgseg/errors.hpp"
#include "scgseg/metrics_log.hpp"

namespace scgseg {

// Renders one PNG per (metric, split) from a metrics log -- dice and total
// loss against training step -- plus a CSV sidecar per plot and a curves.json
// manifest, so the plotted data stays machine-checkable. The x axis always
// spans [0, max step of the log], shared across plots.

namespace detail {
struct Series {
  std::string metric, split;
  std::vector<double> steps, values;
};

inline void draw_series(const Series& s, long long x_max,
                        const std::string& path) {
  const int W = 720, H = 480, ml = 70, mr = 20, mt = 40, mb = 50;
  cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
  double lo = *std::min_element(s.values.begin(), s.values.end());
  double hi = *std::max_element(s.values.begin(), s.values.end());
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double xspan = std::max<double>(1, x_max);

  auto px = [&](double step) {
    return ml + int((W - ml - mr) * step / xspan);
  };
  auto py = [&](double v) {
    return H - mb - int((H - mt - mb) * (v - lo) / (hi - lo));
  };

  const cv::Scalar axis(60, 60, 60), line(180, 90, 20);
  cv::line(img, {ml, H - mb}, {W - mr, H - mb}, axis, 1);
  cv::line(img, {ml, mt}, {ml, H - mb}, axis, 1);
  for (std::size_t i = 1; i < s.steps.size(); ++i)
    cv::line(img, {px(s.steps[i - 1]), py(s.values[i - 1])},
             {px(s.steps[i]), py(s.values[i])}, line, 2, cv::LINE_AA);
  if (s.steps.size() == 1)
    cv::circle(img, {px(s.steps[0]), py(s.values[0])}, 3, line, cv::FILLED);

  char buf[64];
  cv::putText(img, s.metric + " / " + s.split, {ml, mt - 12},
              cv::FONT_HERSHEY_SIMPLEX, 0.6, axis, 1, cv::LINE_AA);
  cv::putText(img, "0", {ml - 5, H - mb + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
              axis, 1, cv::LINE_AA);
  std::snprintf(buf, sizeof(buf), "%lld", x_max);
  cv::putText(img, buf, {W - mr - 50, H - mb + 20}, cv::FONT_HERSHEY_SIMPLEX,
              0.45, axis, 1, cv::LINE_AA);
  std::snprintf(buf, sizeof(buf), "%.4g", lo + pad);
  cv::putText(img, buf, {4, H - mb}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1,
              cv::LINE_AA);
  std::snprintf(buf, sizeof(buf), "%.4g", hi - pad);
  cv::putText(img, buf, {4, mt + 10}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1,
              cv::LINE_AA);

  if (!cv::imwrite(path, img))
    throw IoError("cannot write plot '" + path + "'");
}
}  // namespace detail

inline std::vector<std::string> emit_curves(const std::string& log_path,
                                            const std::string& out_dir) {
  const auto rows = read_metrics(log_path);
  if (rows.empty())
    throw ValidationError("metrics log '" + log_path + "' has no data rows");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  long long x_max = 0;
  for (const auto& r : rows) x_max = std::max(x_max, r.step);

  std::vector<detail::Series> series;
  for (const char* split : {"train", "test"})
    for (const char* metric : {"dice", "total"}) {
      detail::Series s;
      s.metric = metric;
      s.split = split;
      for (const auto& r : rows) {
        if (r.split != split) continue;
        s.steps.push_back(double(r.step));
        s.values.push_back(s.metric == "dice" ? r.dice : r.total);
      }
      if (!s.steps.empty()) series.push_back(std::move(s));
    }

  std::vector<std::string> written;
  nlohmann::json meta = nlohmann::json::array();
  for (const auto& s : series) {
    const std::string base = s.metric + "_" + s.split;
    const std::string png = (fs::path(out_dir) / (base + ".png")).string();
    const std::string csv = (fs::path(out_dir) / (base + ".csv")).string();
    detail::draw_series(s, x_max, png);
    std::ofstream out(csv);
    if (!out) throw IoError("cannot write sidecar '" + csv + "'");
    out.precision(17);
    out << "step,value\n";
    for (std::size_t i = 0; i < s.steps.size(); ++i)
      out << (long long)s.steps[i] << ',' << s.values[i] << '\n';
    meta.push_back({{"metric", s.metric},
                    {"split", s.split},
                    {"png", png},
                    {"csv", csv},
                    {"x_min", 0},
                    {"x_max", x_max},
                    {"points", s.steps.size()}});
    written.push_back(png);
  }
  std::ofstream mf(fs::path(out_dir) / "curves.json");
  mf << meta.dump(2) << "\n";
  return written;
}

}  // namespace scgseg
