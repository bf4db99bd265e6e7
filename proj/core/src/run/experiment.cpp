#include "innerloop/run/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "innerloop/error.hpp"
#include "innerloop/hist/recorder.hpp"
#include "innerloop/nn/checkpoint.hpp"
#include "innerloop/probes/report.hpp"

namespace fs = std::filesystem;

namespace innerloop::run {

std::string RunPaths::config() const { return (fs::path(dir) / "config.json").string(); }
std::string RunPaths::dataset() const { return (fs::path(dir) / "dataset.jsonl").string(); }
std::string RunPaths::history() const { return (fs::path(dir) / "history.hlog").string(); }
std::string RunPaths::train_log() const { return (fs::path(dir) / "train_log.csv").string(); }
std::string RunPaths::manifest() const { return (fs::path(dir) / "run.json").string(); }
std::string RunPaths::checkpoint(int epoch) const {
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%04d.mlns", epoch);
  return (fs::path(dir) / "checkpoints" / name).string();
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw IoError("cannot write " + path);
}

template <class T>
TrainOutcome train_impl(const RunConfig& cfg, const RunPaths& paths, const synthlang::DatasetSplit& data,
                        const ProgressFn& progress) {
  TrainOutcome out;
  auto state = nn::init_params<T>(cfg.model, cfg.init);
  const auto schedule = cfg.checkpoint_epochs();
  auto save_if_scheduled = [&] {
    if (std::find(schedule.begin(), schedule.end(), state.epoch) == schedule.end()) return;
    nn::save_checkpoint(state, paths.checkpoint(state.epoch));
    out.checkpoints.push_back(state.epoch);
  };

  std::optional<hist::HistoryWriter> writer;
  std::optional<hist::HistoryRecorder<T>> recorder;
  if (cfg.history.enabled) {
    hist::LogHeader h;
    h.model = cfg.model;
    h.layout = hist::RecordLayout::for_model(cfg.model, cfg.value_layers(), cfg.history.grad_layers);
    h.optimizer = cfg.train.optimizer;
    h.stride = cfg.history.stride;
    h.extra = {{"dataset_hash", synthlang::dataset_hash(data)}, {"profile", cfg.profile}};
    writer.emplace(paths.history(), h);
    recorder.emplace(*writer);
  }

  std::string csv = "epoch,lr,train_loss,val_loss,clipped,tokens\n";
  save_if_scheduled();
  for (int e = 0; e < cfg.train.epochs; ++e) {
    EpochRecord rec;
    const auto abort_path = (fs::path(paths.dir) / "aborted.mlns").string();
    rec.summary = nn::train_epoch(state, data.train, cfg.train, recorder ? &*recorder : nullptr,
                                  recorder ? std::optional<std::string>(abort_path) : std::nullopt);
    rec.val_loss = nn::evaluate_loss(state, data.validation);
    csv += std::to_string(rec.summary.epoch) + "," + probes::format_double(rec.summary.lr) + "," +
           probes::format_double(rec.summary.mean_loss) + "," + probes::format_double(rec.val_loss) + "," +
           std::to_string(rec.summary.clipped) + "," + std::to_string(rec.summary.tokens) + "\n";
    save_if_scheduled();
    if (progress) progress(rec);
    out.epochs.push_back(rec);
  }
  if (writer) {
    writer->close();
    out.history_records = writer->count();
  }
  write_text(paths.train_log(), csv);
  return out;
}

}  // namespace

TrainOutcome train_run(const RunConfig& config, const std::string& dir, const ProgressFn& progress) {
  config.validate();
  RunPaths paths{dir};
  fs::create_directories(fs::path(dir) / "checkpoints");
  fs::remove(paths.manifest());
  write_text(paths.config(), nlohmann::json(config).dump(2) + "\n");

  const auto data = synthlang::build_dataset(config.data);
  synthlang::write_dataset(data, paths.dataset());

  const auto start = std::chrono::steady_clock::now();
  auto out = config.model.precision == nn::Precision::kF64 ? train_impl<double>(config, paths, data, progress)
                                                           : train_impl<float>(config, paths, data, progress);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  nlohmann::json manifest = {{"config_hash", config.model.hash()},
                             {"dataset_hash", synthlang::dataset_hash(data)},
                             {"checkpoints", out.checkpoints},
                             {"history", config.history.enabled},
                             {"history_records", out.history_records},
                             {"final_train_loss", out.epochs.empty() ? 0.0 : out.epochs.back().summary.mean_loss},
                             {"final_val_loss", out.epochs.empty() ? 0.0 : out.epochs.back().val_loss},
                             {"seconds", out.seconds}};
  write_text(paths.manifest(), manifest.dump(2) + "\n");
  return out;
}

nn::Model Run::model(int epoch) const {
  if (std::find(checkpoints.begin(), checkpoints.end(), epoch) == checkpoints.end())
    throw ConfigError("run has no checkpoint for epoch " + std::to_string(epoch));
  auto m = nn::Model(nn::load_any_checkpoint(paths.checkpoint(epoch)));
  if (m.config() != config.model)
    throw ConfigError("checkpoint " + paths.checkpoint(epoch) + " does not match the run config: " +
                      m.config().diff(config.model));
  return m;
}

const std::vector<synthlang::TokenSequence>& Run::split(const std::string& name) const {
  if (name == "train") return data.train;
  if (name == "validation") return data.validation;
  throw ConfigError("unknown split '" + name + "' (expected train or validation)");
}

bool Run::has_history() const { return config.history.enabled && fs::exists(paths.history()); }

Run open_run(const std::string& dir) {
  Run r;
  r.paths.dir = dir;
  if (!fs::exists(r.paths.manifest()))
    throw IoError("no finished run in " + dir + " (missing " + r.paths.manifest() + ")");
  r.config = load_run_config(r.paths.config());
  nlohmann::json manifest;
  {
    std::ifstream f(r.paths.manifest());
    manifest = nlohmann::json::parse(f);
  }
  if (manifest.at("config_hash").get<std::uint64_t>() != r.config.model.hash())
    throw ConfigError(dir + ": config.json does not match the model the run trained (config hash mismatch)");
  r.data = synthlang::read_dataset(r.paths.dataset());
  r.dataset_hash = synthlang::dataset_hash(r.data);
  if (manifest.at("dataset_hash").get<std::uint64_t>() != r.dataset_hash)
    throw ConfigError(dir + ": dataset.jsonl does not match the dataset the run trained on (dataset hash mismatch)");
  r.checkpoints = manifest.at("checkpoints").get<std::vector<int>>();
  if (r.checkpoints.empty()) throw ConfigError(dir + ": run has no checkpoints");
  return r;
}

bool run_is_complete(const std::string& dir, const RunConfig& config) {
  RunPaths paths{dir};
  if (!fs::exists(paths.manifest()) || !fs::exists(paths.config())) return false;
  try {
    return load_run_config(paths.config()) == config;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace innerloop::run
