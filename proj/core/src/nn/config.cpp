#include "innerloop/nn/config.hpp"

#include <cmath>
#include <numbers>

#include "innerloop/error.hpp"
#include "innerloop/util/binary_io.hpp"

namespace innerloop::nn {

std::string to_string(NormPlacement p) { return p == NormPlacement::kPre ? "pre" : "post"; }
std::string to_string(Activation a) { return a == Activation::kGelu ? "gelu" : "relu"; }
std::string to_string(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }
std::string to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adamw"; }
std::string to_string(LrSchedule s) { return s == LrSchedule::kConstant ? "constant" : "cosine"; }

namespace {

template <class E>
E parse_enum(const nlohmann::json& j, const char* key, E fallback, std::initializer_list<std::pair<const char*, E>> names) {
  if (!j.contains(key)) return fallback;
  const auto s = j.at(key).get<std::string>();
  for (const auto& [name, value] : names) {
    if (s == name) return value;
  }
  throw ConfigError(std::string("unknown value \"") + s + "\" for " + key);
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (n_heads < 1 || d_model < 1 || d_model % n_heads != 0)
    throw ConfigError("d_model must be a positive multiple of n_heads");
  if (d_ff < 1) throw ConfigError("d_ff must be >= 1");
  if (vocab < 2) throw ConfigError("vocab must be >= 2");
  if (max_seq_len < 2) throw ConfigError("max_seq_len must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(layer_norm_eps > 0.0)) throw ConfigError("layer_norm_eps must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_layers", c.n_layers},
                     {"n_heads", c.n_heads},
                     {"d_model", c.d_model},
                     {"d_ff", c.d_ff},
                     {"vocab", c.vocab},
                     {"max_seq_len", c.max_seq_len},
                     {"dropout", c.dropout},
                     {"norm_placement", to_string(c.norm_placement)},
                     {"final_norm_before_head", c.final_norm_before_head},
                     {"precision", to_string(c.precision)},
                     {"attn_scale", c.attn_scale},
                     {"activation", to_string(c.activation)},
                     {"layer_norm_eps", c.layer_norm_eps}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.n_layers = j.value("n_layers", d.n_layers);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.d_model = j.value("d_model", d.d_model);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.vocab = j.value("vocab", d.vocab);
  c.max_seq_len = j.value("max_seq_len", d.max_seq_len);
  c.dropout = j.value("dropout", d.dropout);
  c.norm_placement = parse_enum(j, "norm_placement", d.norm_placement,
                                {{"pre", NormPlacement::kPre}, {"post", NormPlacement::kPost}});
  c.final_norm_before_head = j.value("final_norm_before_head", d.final_norm_before_head);
  c.precision = parse_enum(j, "precision", d.precision, {{"f32", Precision::kF32}, {"f64", Precision::kF64}});
  c.attn_scale = j.value("attn_scale", d.attn_scale);
  c.activation = parse_enum(j, "activation", d.activation, {{"gelu", Activation::kGelu}, {"relu", Activation::kRelu}});
  c.layer_norm_eps = j.value("layer_norm_eps", d.layer_norm_eps);
}

std::uint64_t ModelConfig::hash() const { return bin::fnv1a64(nlohmann::json(*this).dump()); }

std::string ModelConfig::diff(const ModelConfig& other) const {
  const nlohmann::json a = *this;
  const nlohmann::json b = other;
  std::string out;
  for (auto it = a.begin(); it != a.end(); ++it) {
    const auto& rhs = b.at(it.key());
    if (*it != rhs) {
      if (!out.empty()) out += ", ";
      out += it.key() + ": " + it->dump() + " vs " + rhs.dump();
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const InitOptions& o) {
  j = nlohmann::json{{"rng_seed", o.rng_seed}, {"zero_lm_head", o.zero_lm_head}, {"zero_out_proj", o.zero_out_proj}};
}

void from_json(const nlohmann::json& j, InitOptions& o) {
  InitOptions d;
  o.rng_seed = j.value("rng_seed", d.rng_seed);
  o.zero_lm_head = j.value("zero_lm_head", d.zero_lm_head);
  o.zero_out_proj = j.value("zero_out_proj", d.zero_out_proj);
}

TrainConfig TrainConfig::sgd_profile() { return TrainConfig{}; }

TrainConfig TrainConfig::adamw_profile() {
  TrainConfig c;
  c.optimizer = OptimizerKind::kAdamW;
  c.lr = 1e-3;
  c.epochs = 300;
  c.weight_decay = 0.1;
  c.max_grad_norm = 1.0;
  c.lr_schedule = LrSchedule::kCosine;
  return c;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(max_grad_norm > 0.0)) throw ConfigError("max_grad_norm must be > 0");
  if (optimizer == OptimizerKind::kSgd && weight_decay != 0.0)
    throw ConfigError("weight decay is only supported with AdamW");
}

double TrainConfig::lr_at_epoch(int epoch) const {
  if (lr_schedule == LrSchedule::kConstant || epochs <= 0) return lr;
  // Cosine annealing to zero over `epochs`, stepped once per epoch.
  return 0.5 * lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs)));
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"optimizer", to_string(c.optimizer)},
                     {"lr", c.lr},
                     {"epochs", c.epochs},
                     {"weight_decay", c.weight_decay},
                     {"max_grad_norm", c.max_grad_norm},
                     {"lr_schedule", to_string(c.lr_schedule)},
                     {"rng_seed", c.rng_seed},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d = (j.contains("optimizer") && j.at("optimizer") == "adamw") ? TrainConfig::adamw_profile()
                                                                                  : TrainConfig::sgd_profile();
  c.optimizer = parse_enum(j, "optimizer", d.optimizer, {{"sgd", OptimizerKind::kSgd}, {"adamw", OptimizerKind::kAdamW}});
  c.lr = j.value("lr", d.lr);
  c.epochs = j.value("epochs", d.epochs);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.max_grad_norm = j.value("max_grad_norm", d.max_grad_norm);
  c.lr_schedule = parse_enum(j, "lr_schedule", d.lr_schedule,
                             {{"constant", LrSchedule::kConstant}, {"cosine", LrSchedule::kCosine}});
  c.rng_seed = j.value("rng_seed", d.rng_seed);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
}

}  // namespace innerloop::nn
