#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "innerloop/nn/config.hpp"
#include "innerloop/synthlang/dataset.hpp"

namespace innerloop::run {

struct HistoryOptions {
  bool enabled = true;
  int stride = 1;
  // 1-based layers whose u and a vectors are stored; empty = all layers.
  std::vector<int> value_layers;
  // 1-based layers whose dL/dy and dL/db are stored.
  std::vector<int> grad_layers{3};

  friend void to_json(nlohmann::json& j, const HistoryOptions& o);
  friend void from_json(const nlohmann::json& j, HistoryOptions& o);
  bool operator==(const HistoryOptions&) const = default;
};

// Everything that determines a training run.
struct RunConfig {
  std::string profile = "custom";
  synthlang::GenerationConfig data;
  nn::ModelConfig model;
  nn::InitOptions init;
  nn::TrainConfig train;
  HistoryOptions history;
  int checkpoint_every = 10;

  // Plain SGD on the small dataset.
  static RunConfig sgd_small();
  // AdamW with cosine annealing on the 50-seed dataset; no history.
  static RunConfig adamw_large();
  static RunConfig from_profile(const std::string& name);
  static std::vector<std::string> profiles();

  void validate() const;
  std::vector<int> value_layers() const;
  // Epochs at which checkpoints are written: 0, every checkpoint_every, last.
  std::vector<int> checkpoint_epochs() const;

  friend void to_json(nlohmann::json& j, const RunConfig& c);
  friend void from_json(const nlohmann::json& j, RunConfig& c);
  bool operator==(const RunConfig&) const = default;
};

// Loads a JSON run config. A "profile" key selects the base values that the
// remaining keys override.
RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json(const nlohmann::json& j);

}  // namespace innerloop::run
