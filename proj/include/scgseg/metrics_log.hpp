#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scgseg/errors.hpp"

namespace scgseg {

inline constexpr const char* kMetricsHeader =
    "step,epoch,split,total,primary,kl,dl,aux,dice,ftl";

struct MetricRow {
  long long step = 0;
  int epoch = 0;
  std::string split;  // "train" or "test"
  double total = 0, primary = 0, kl = 0, dl = 0, aux = 0;
  double dice = 0, ftl = 0;
};

// Append-only CSV writer. Every append is a single formatted write followed
// by a flush, so a killed run leaves at worst a complete prefix of rows.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path) : path_(path) {
    const bool fresh = [&] {
      std::ifstream probe(path);
      return !probe || probe.peek() == std::ifstream::traits_type::eof();
    }();
    out_.open(path, std::ios::app);
    if (!out_) throw IoError("cannot open metrics log '" + path + "'");
    if (fresh) {
      out_ << kMetricsHeader << "\n";
      out_.flush();
    }
  }

  void append(const MetricRow& r) {
    std::ostringstream line;
    line.precision(17);
    line << r.step << ',' << r.epoch << ',' << r.split << ',' << r.total
         << ',' << r.primary << ',' << r.kl << ',' << r.dl << ',' << r.aux
         << ',' << r.dice << ',' << r.ftl << '\n';
    out_ << line.str();
    out_.flush();
    if (!out_) throw IoError("failed writing metrics log '" + path_ + "'");
  }

 private:
  std::string path_;
  std::ofstream out_;
};

inline std::vector<MetricRow> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics log '" + path + "'");
  std::string line;
  std::vector<MetricRow> rows;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != kMetricsHeader)
        throw ValidationError(path + ": unexpected metrics header '" + line +
                              "'");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 10)
      throw ValidationError(path + ":" + std::to_string(lineno) +
                            ": expected 10 fields, got " +
                            std::to_string(f.size()));
    try {
      MetricRow r;
      r.step = std::stoll(f[0]);
      r.epoch = std::stoi(f[1]);
      r.split = f[2];
      r.total = std::stod(f[3]);
      r.primary = std::stod(f[4]);
      r.kl = std::stod(f[5]);
      r.dl = std::stod(f[6]);
      r.aux = std::stod(f[7]);
      r.dice = std::stod(f[8]);
      r.ftl = std::stod(f[9]);
      rows.push_back(std::move(r));
    } catch (const std::exception&) {
      throw ValidationError(path + ":" + std::to_string(lineno) +
                            ": malformed row '" + line + "'");
    }
  }
  return rows;
}

}  // namespace scgseg
