#pragma once

#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "innerloop/nn/params.hpp"
#include "innerloop/synthlang/vocab.hpp"
#include "innerloop/util/rng.hpp"

namespace innerloop::nn {

using synthlang::TokenId;

enum class Mode { kTrain, kEval };

// LayerNorm cache: normalized input and reciprocal standard deviation.
template <class T>
struct NormCache {
  Mat<T> xhat;
  Vec<T> rstd;
};

// Everything one transformer block computed for one sequence. Rows index
// positions. Dropout masks hold 0 or 1/(1-p) and are empty in eval mode.
template <class T>
struct BlockTrace {
  Mat<T> input;       // z^{l-1}
  NormCache<T> norm1;
  Mat<T> attn_in;     // input to the Q/K/V projections
  Mat<T> q, k, v;     // n x d_model, heads stacked column-wise
  std::vector<Mat<T>> probs;       // per head, n x n softmax rows (zero above diagonal)
  std::vector<Mat<T>> probs_mask;  // per head attention dropout mask
  Mat<T> attn_value;  // u: n x d_model, head h in columns [h*d_head, (h+1)*d_head)
  Mat<T> attn_out;    // y = u W_O^T, the MHSA output before dropout
  Mat<T> attn_out_mask;
  Mat<T> mid;         // z^{l+1/2}
  NormCache<T> norm2;
  Mat<T> ffn_in;      // input to W_1
  Mat<T> ffn_pre;     // W_1 ffn_in
  Mat<T> ffn_act;     // a = phi(ffn_pre)
  Mat<T> ffn_out;     // b = W_2 a, before dropout
  Mat<T> ffn_out_mask;
  // Post-norm placement keeps the pre-normalization sums.
  Mat<T> sum1, sum2;
};

template <class T>
struct LayerTrace {
  std::vector<TokenId> inputs;   // tokens[0..n-1]
  std::vector<TokenId> targets;  // tokens[1..n]
  Mat<T> embed_mask;
  std::vector<Mat<T>> z;  // z[0] embedding output, z[l] output of block l
  std::vector<BlockTrace<T>> blocks;
  NormCache<T> final_norm;
  Mat<T> head_in;  // z^{L+1}: the vector multiplied by W_LH
  Mat<T> logits;   // z^{L+2}
  Mat<T> softmax;  // s
  std::vector<double> loss;  // per-position cross-entropy

  int positions() const { return static_cast<int>(inputs.size()); }
  int layers() const { return static_cast<int>(blocks.size()); }
  double total_loss() const { return std::accumulate(loss.begin(), loss.end(), 0.0); }
};

// Gradients of the summed loss plus the intermediate output gradients the
// dual-form analyses need.
template <class T>
struct Gradients {
  Params<T> params;
  std::vector<Mat<T>> d_attn_out;  // per block: dL/dy (n x d_model), shared by all heads
  std::vector<Mat<T>> d_ffn_out;   // per block: dL/db (n x d_model)
  Mat<T> d_logits;                 // s - onehot(target)
};

// Runs the model on tokens[0..n-2] predicting tokens[1..n-1]. Train mode
// requires `rng` for dropout. Throws NumericError naming the layer and
// position of the first non-finite activation.
template <class T>
LayerTrace<T> forward_trace(const ModelState<T>& state, std::span<const TokenId> tokens, Mode mode,
                            Rng* rng = nullptr);

template <class T>
Gradients<T> backward(const ModelState<T>& state, const LayerTrace<T>& trace);

// Convenience: forward (train mode when rng != nullptr) then backward.
template <class T>
std::pair<LayerTrace<T>, Gradients<T>> forward_backward(const ModelState<T>& state,
                                                        std::span<const TokenId> tokens, Rng* rng);

// LM head applied to arbitrary representations, optionally through the
// model's final norm. Rows are positions.
template <class T>
Mat<T> head_logits(const ModelState<T>& state, const Mat<T>& z, bool apply_final_norm);

}  // namespace innerloop::nn
