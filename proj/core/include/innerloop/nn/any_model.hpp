#pragma once

#include <span>
#include <string>
#include <vector>

#include "innerloop/nn/checkpoint.hpp"
#include "innerloop/nn/model.hpp"

namespace innerloop::nn {

// Eval-mode trace in double precision, for analysis code that should not
// care about the training precision.
struct ProbeTrace {
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
  std::vector<MatD> z;           // L+1 entries, n x d_model
  std::vector<MatD> attn_in;     // per block: input to Q/K/V
  std::vector<MatD> attn_value;  // per block: u, n x d_model
  std::vector<MatD> ffn_act;     // per block: a, n x d_ff
  std::vector<std::vector<MatD>> probs;  // per block, per head
  MatD head_in;
  MatD logits;
  MatD softmax;
  std::vector<double> loss;
};

// A model of either precision behind one interface.
class Model {
 public:
  explicit Model(AnyState state) : state_(std::move(state)) {}
  static Model load(const std::string& checkpoint_path);

  const ModelConfig& config() const;
  int epoch() const;
  const AnyState& state() const { return state_; }

  ProbeTrace probe(std::span<const TokenId> tokens) const;
  // LM head on rows of z, optionally through the final norm (a no-op for
  // models without one).
  MatD head_logits(const MatD& z, bool apply_final_norm) const;
  // The final norm alone; identity for models without one.
  MatD final_norm(const MatD& z) const;
  Params<double> params() const;

 private:
  AnyState state_;
};

template <class T>
ProbeTrace to_probe_trace(const LayerTrace<T>& trace);

}  // namespace innerloop::nn
