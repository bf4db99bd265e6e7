#include "innerloop/probes/report.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <tuple>

#include "innerloop/error.hpp"

namespace innerloop::probes {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void Report::add(int epoch, int layer, std::string split, std::string ground_truth, std::string metric,
                 double value) {
  rows.push_back({epoch, layer, std::move(split), std::move(ground_truth), std::move(metric), value});
}

void Report::sort() {
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return std::tie(a.epoch, a.layer, a.split, a.ground_truth, a.metric) <
           std::tie(b.epoch, b.layer, b.split, b.ground_truth, b.metric);
  });
}

std::vector<const ReportRow*> Report::find(const std::string& metric) const {
  std::vector<const ReportRow*> out;
  for (const auto& r : rows)
    if (r.metric == metric) out.push_back(&r);
  return out;
}

const ReportRow* Report::find(int epoch, int layer, const std::string& split, const std::string& ground_truth,
                              const std::string& metric) const {
  for (const auto& r : rows)
    if (r.epoch == epoch && r.layer == layer && r.split == split && r.ground_truth == ground_truth &&
        r.metric == metric)
      return &r;
  return nullptr;
}

std::string Report::to_csv() const {
  std::string out = "epoch,layer,split,ground_truth,metric,value\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.layer) + "," + r.split + "," + r.ground_truth + "," +
           r.metric + "," + format_double(r.value) + "\n";
  }
  return out;
}

nlohmann::json Report::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"epoch", r.epoch},
                         {"layer", r.layer},
                         {"split", r.split},
                         {"ground_truth", r.ground_truth},
                         {"metric", r.metric},
                         {"value", r.value}});
  }
  return {{"report", name}, {"sources", sources}, {"rows", rows_json}};
}

void Report::write(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  const auto base = std::filesystem::path(dir) / name;
  {
    std::ofstream f(base.string() + ".csv", std::ios::binary | std::ios::trunc);
    f << to_csv();
    if (!f) throw IoError("cannot write " + base.string() + ".csv");
  }
  std::ofstream f(base.string() + ".json", std::ios::binary | std::ios::trunc);
  f << to_json().dump(2) << "\n";
  if (!f) throw IoError("cannot write " + base.string() + ".json");
}

}  // namespace innerloop::probes
