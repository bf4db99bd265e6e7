#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace innerloop::nn {

enum class NormPlacement { kPre, kPost };
enum class Activation { kGelu, kRelu };
enum class Precision { kF32, kF64 };

std::string to_string(NormPlacement p);
std::string to_string(Activation a);
std::string to_string(Precision p);

// Architecture of the decoder-only transformer. Defaults: 6 layers, 8 heads,
// d_model 64, d_ff 128, vocabulary 28, dropout 0.2.
struct ModelConfig {
  int n_layers = 6;
  int n_heads = 8;
  int d_model = 64;
  int d_ff = 128;
  int vocab = 28;
  int max_seq_len = 64;
  double dropout = 0.2;
  NormPlacement norm_placement = NormPlacement::kPre;
  bool final_norm_before_head = true;
  Precision precision = Precision::kF32;
  // Multiply attention scores by 1/sqrt(d_head). Off: scores are raw q.k.
  bool attn_scale = false;
  Activation activation = Activation::kGelu;
  double layer_norm_eps = 1e-5;

  int d_head() const { return d_model / n_heads; }
  void validate() const;
  // FNV-1a of the canonical JSON encoding.
  std::uint64_t hash() const;
  // Human-readable list of differing fields ("d_model: 64 vs 32, ...").
  std::string diff(const ModelConfig& other) const;

  bool operator==(const ModelConfig&) const = default;
  friend void to_json(nlohmann::json& j, const ModelConfig& c);
  friend void from_json(const nlohmann::json& j, ModelConfig& c);
};

struct InitOptions {
  std::uint64_t rng_seed = 0;
  bool zero_lm_head = false;
  bool zero_out_proj = false;

  bool operator==(const InitOptions&) const = default;
  friend void to_json(nlohmann::json& j, const InitOptions& o);
  friend void from_json(const nlohmann::json& j, InitOptions& o);
};

enum class OptimizerKind { kSgd, kAdamW };
enum class LrSchedule { kConstant, kCosine };

std::string to_string(OptimizerKind k);
std::string to_string(LrSchedule s);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double lr = 1.0;
  int epochs = 174;
  double weight_decay = 0.0;
  double max_grad_norm = 1.0;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  std::uint64_t rng_seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // Plain SGD, lr 1.0, 174 epochs, no weight decay, clip 1.0.
  static TrainConfig sgd_profile();
  // AdamW, lr 1e-3, 300 epochs, weight decay 0.1, cosine annealing, clip 1.0.
  static TrainConfig adamw_profile();

  void validate() const;
  // Learning rate in effect during `epoch` (0-based).
  double lr_at_epoch(int epoch) const;

  bool operator==(const TrainConfig&) const = default;
  friend void to_json(nlohmann::json& j, const TrainConfig& c);
  friend void from_json(const nlohmann::json& j, TrainConfig& c);
};

}  // namespace innerloop::nn
