#include "innerloop/run/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "innerloop/error.hpp"

namespace innerloop::run {

void to_json(nlohmann::json& j, const HistoryOptions& o) {
  j = nlohmann::json{{"enabled", o.enabled},
                     {"stride", o.stride},
                     {"value_layers", o.value_layers},
                     {"grad_layers", o.grad_layers}};
}

void from_json(const nlohmann::json& j, HistoryOptions& o) {
  HistoryOptions d;
  o.enabled = j.value("enabled", d.enabled);
  o.stride = j.value("stride", d.stride);
  o.value_layers = j.value("value_layers", d.value_layers);
  o.grad_layers = j.value("grad_layers", d.grad_layers);
}

RunConfig RunConfig::sgd_small() {
  RunConfig c;
  c.profile = "sgd-small";
  c.data = synthlang::GenerationConfig::small();
  c.train = nn::TrainConfig::sgd_profile();
  return c;
}

RunConfig RunConfig::adamw_large() {
  RunConfig c;
  c.profile = "adamw-large";
  c.data = synthlang::GenerationConfig::large();
  c.train = nn::TrainConfig::adamw_profile();
  c.history.enabled = false;
  c.history.grad_layers.clear();
  return c;
}

std::vector<std::string> RunConfig::profiles() { return {"sgd-small", "adamw-large"}; }

RunConfig RunConfig::from_profile(const std::string& name) {
  if (name == "sgd-small") return sgd_small();
  if (name == "adamw-large") return adamw_large();
  throw ConfigError("unknown profile '" + name + "' (expected sgd-small or adamw-large)");
}

void RunConfig::validate() const {
  data.validate();
  model.validate();
  train.validate();
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (data.max_seq_len > model.max_seq_len)
    throw ConfigError("dataset max_seq_len " + std::to_string(data.max_seq_len) + " exceeds the model's " +
                      std::to_string(model.max_seq_len));
  if (history.enabled) {
    if (history.stride < 1) throw ConfigError("history stride must be >= 1");
    auto check = [&](const std::vector<int>& v, const char* what) {
      for (int l : v)
        if (l < 1 || l > model.n_layers)
          throw ConfigError(std::string(what) + " layer " + std::to_string(l) + " outside [1, " +
                            std::to_string(model.n_layers) + "]");
    };
    check(history.value_layers, "history value");
    check(history.grad_layers, "history gradient");
  }
}

std::vector<int> RunConfig::value_layers() const {
  if (!history.value_layers.empty()) return history.value_layers;
  std::vector<int> all(static_cast<std::size_t>(model.n_layers));
  for (int l = 0; l < model.n_layers; ++l) all[static_cast<std::size_t>(l)] = l + 1;
  return all;
}

std::vector<int> RunConfig::checkpoint_epochs() const {
  std::vector<int> out{0};
  for (int e = checkpoint_every; e < train.epochs; e += checkpoint_every) out.push_back(e);
  if (train.epochs > 0) out.push_back(train.epochs);
  return out;
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"profile", c.profile}, {"data", c.data},       {"model", c.model},
                     {"init", c.init},       {"train", c.train},     {"history", c.history},
                     {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  RunConfig d;
  c.profile = j.value("profile", d.profile);
  c.data = j.value("data", d.data);
  c.model = j.value("model", d.model);
  c.init = j.value("init", d.init);
  c.train = j.value("train", d.train);
  c.history = j.value("history", d.history);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
}

namespace {

void reject_unknown(const nlohmann::json& user, const nlohmann::json& known, const std::string& where) {
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!known.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (value.is_object() && known.at(key).is_object()) reject_unknown(value, known.at(key), path);
  }
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig base = j.contains("profile") ? RunConfig::from_profile(j.at("profile").get<std::string>()) : RunConfig{};
  nlohmann::json merged = base;
  reject_unknown(j, merged, "");
  merged.merge_patch(j);
  try {
    auto c = merged.get<RunConfig>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path);
  try {
    return run_config_from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON (" + e.what() + ")");
  }
}

}  // namespace innerloop::run
