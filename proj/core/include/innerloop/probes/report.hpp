#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace innerloop::probes {

struct ReportRow {
  int epoch = 0;
  int layer = 0;
  std::string split;
  std::string ground_truth;  // or a module / statistic qualifier
  std::string metric;
  double value = 0.0;
};

// Metric table plus the identifiers of everything it was computed from.
struct Report {
  std::string name;
  nlohmann::json sources = nlohmann::json::object();  // checkpoints, dataset, config hashes
  std::vector<ReportRow> rows;

  void add(int epoch, int layer, std::string split, std::string ground_truth, std::string metric, double value);
  // Rows sorted by (epoch, layer, split, ground_truth, metric).
  void sort();
  std::vector<const ReportRow*> find(const std::string& metric) const;
  const ReportRow* find(int epoch, int layer, const std::string& split, const std::string& ground_truth,
                        const std::string& metric) const;

  std::string to_csv() const;
  nlohmann::json to_json() const;
  void write(const std::string& dir) const;  // <dir>/<name>.csv and <name>.json
};

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace innerloop::probes
