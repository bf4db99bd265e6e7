#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "innerloop/hist/log.hpp"
#include "innerloop/nn/params.hpp"

namespace innerloop::hist {

// A weight matrix with a dual-form expansion.
struct WeightRef {
  enum class Kind { kLmHead, kOutProj, kFfnOut };
  Kind kind = Kind::kLmHead;
  int layer = 0;  // 1-based block, for kOutProj / kFfnOut
  int head = -1;  // kOutProj only; -1 selects all heads (full W_O)

  static WeightRef lm_head() { return {Kind::kLmHead, 0, -1}; }
  static WeightRef out_proj(int layer, int head = -1) { return {Kind::kOutProj, layer, head}; }
  static WeightRef ffn_out(int layer) { return {Kind::kFfnOut, layer, -1}; }
  std::string name() const;
};

// Extracts the referenced matrix from a parameter set.
nn::MatD select_weight(const nn::Params<double>& params, const nn::ModelConfig& config, const WeightRef& which);

// W_0 - sum_{t <= up_to_step} eta_t * grad_t (x) input_t, where (grad, input)
// is (s - y, z^{L+1}) for the LM head, (dL/dy, u^{lh}) for W_O^{lh} and
// (dL/db, a^l) for W_2^l. Refuses AdamW logs, subsampled logs and blocks
// that were not recorded (ContractError).
nn::MatD reconstruct_weight(HistoryReader& log, const WeightRef& which, const nn::MatD& initial,
                            std::optional<std::uint64_t> up_to_step = std::nullopt);
// Several matrices in one pass over the log.
std::vector<nn::MatD> reconstruct_weights(HistoryReader& log, const std::vector<WeightRef>& which,
                                          std::vector<nn::MatD> initial,
                                          std::optional<std::uint64_t> up_to_step = std::nullopt);

// Sum over history of eta_t (y_t - s_t) (z_t^T q) for every query row q.
// Equals W_LH q when W_LH started at zero and was trained by plain SGD.
// An empty history yields zeros (and sets *empty_history when given).
nn::MatD dual_head_logits(HistoryReader& log, const nn::MatD& queries,
                          std::optional<std::uint64_t> up_to_step = std::nullopt, bool* empty_history = nullptr);

struct WeightEntry {
  std::uint64_t step = 0;
  std::uint32_t epoch = 0;
  std::uint16_t seed_label = 0;
  std::uint16_t next_token = 0;
  double weight = 0.0;
};

// w_t = (u_t^{lh})^T u_query for every recorded step.
std::vector<WeightEntry> mhsa_weights(HistoryReader& log, int layer, int head, const Eigen::VectorXd& u_query,
                                      std::optional<std::uint64_t> up_to_step = std::nullopt);

// w_t = (a_t^l)^T a_query for every recorded step.
std::vector<WeightEntry> ffn_weights(HistoryReader& log, int layer, const Eigen::VectorXd& a_query,
                                     std::optional<std::uint64_t> up_to_step = std::nullopt);

}  // namespace innerloop::hist
