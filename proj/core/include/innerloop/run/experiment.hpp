#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "innerloop/nn/any_model.hpp"
#include "innerloop/nn/trainer.hpp"
#include "innerloop/run/config.hpp"

namespace innerloop::run {

// File layout of a run directory.
struct RunPaths {
  std::string dir;

  std::string config() const;      // resolved config.json
  std::string dataset() const;     // dataset.jsonl
  std::string history() const;     // history.hlog
  std::string train_log() const;   // train_log.csv
  std::string manifest() const;    // run.json, written last
  std::string checkpoint(int epoch) const;
};

struct EpochRecord {
  nn::EpochSummary summary;
  double val_loss = 0.0;
};

struct TrainOutcome {
  std::vector<EpochRecord> epochs;
  std::vector<int> checkpoints;
  std::uint64_t history_records = 0;
  double seconds = 0.0;
};

using ProgressFn = std::function<void(const EpochRecord&)>;

// Builds the dataset, trains, and writes checkpoints, the history log, the
// training log and the manifest under `dir`.
TrainOutcome train_run(const RunConfig& config, const std::string& dir, const ProgressFn& progress = {});

// A finished run, opened read-only.
struct Run {
  RunConfig config;
  RunPaths paths;
  synthlang::DatasetSplit data;
  std::vector<int> checkpoints;
  std::uint64_t dataset_hash = 0;

  nn::Model model(int epoch) const;
  int final_epoch() const { return checkpoints.back(); }
  const std::vector<synthlang::TokenSequence>& split(const std::string& name) const;
  bool has_history() const;
};

// Throws when the manifest is missing or the dataset/config do not match it.
Run open_run(const std::string& dir);

// True when `dir` holds a finished run whose resolved config equals `config`.
bool run_is_complete(const std::string& dir, const RunConfig& config);

}  // namespace innerloop::run
