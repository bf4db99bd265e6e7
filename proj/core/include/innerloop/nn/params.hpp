#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "innerloop/nn/config.hpp"

namespace innerloop::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using MatD = Mat<double>;
using VecD = Vec<double>;

// Per-layer weights. Per-head projections are stored stacked: rows
// [h*d_head, (h+1)*d_head) of wq/wk/wv are W_Q/W_K/W_V of head h
// (d_head x d_model), and the matching columns of wo are W_O of head h
// (d_model x d_head). Norm gains are 1 x d_model rows. No biases.
template <class T>
struct LayerParams {
  Mat<T> ln1_gain, ln2_gain;
  Mat<T> wq, wk, wv, wo;
  Mat<T> w1;  // d_ff x d_model
  Mat<T> w2;  // d_model x d_ff
};

template <class T>
struct Params {
  Mat<T> tok_emb;  // vocab x d_model
  Mat<T> pos_emb;  // max_seq_len x d_model
  std::vector<LayerParams<T>> layers;
  Mat<T> final_gain;  // 1 x d_model
  Mat<T> lm_head;     // vocab x d_model

  // Zero-valued arrays with the shapes implied by `config`.
  static Params zeros(const ModelConfig& config);

  // Visits every array in the fixed serialization order.
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](std::string_view, const Mat<T>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  template <class U>
  Params<U> cast() const {
    Params<U> out;
    out.tok_emb = tok_emb.template cast<U>();
    out.pos_emb = pos_emb.template cast<U>();
    for (const auto& l : layers) {
      out.layers.push_back(LayerParams<U>{l.ln1_gain.template cast<U>(), l.ln2_gain.template cast<U>(),
                                          l.wq.template cast<U>(), l.wk.template cast<U>(), l.wv.template cast<U>(),
                                          l.wo.template cast<U>(), l.w1.template cast<U>(), l.w2.template cast<U>()});
    }
    out.final_gain = final_gain.template cast<U>();
    out.lm_head = lm_head.template cast<U>();
    return out;
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    f("tok_emb", self.tok_emb);
    f("pos_emb", self.pos_emb);
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      auto& l = self.layers[i];
      const std::string p = "layer" + std::to_string(i + 1) + ".";
      f(p + "ln1_gain", l.ln1_gain);
      f(p + "wq", l.wq);
      f(p + "wk", l.wk);
      f(p + "wv", l.wv);
      f(p + "wo", l.wo);
      f(p + "ln2_gain", l.ln2_gain);
      f(p + "w1", l.w1);
      f(p + "w2", l.w2);
    }
    f("final_gain", self.final_gain);
    f("lm_head", self.lm_head);
  }
};

// Adam moment estimates, shaped like the parameters.
template <class T>
struct AdamState {
  Params<T> m;
  Params<T> v;
  std::uint64_t step = 0;
};

template <class T>
struct ModelState {
  ModelConfig config;
  Params<T> params;
  // Present only for AdamW-trained states.
  std::optional<AdamState<T>> adam;
  int epoch = 0;               // completed training epochs
  std::uint64_t token_step = 0;  // supervised positions seen so far
};

// N(0, 1/fan_in) weights (fan_in = d_model for embeddings and every
// d_model-input matrix, d_ff for W_2), unit norm gains.
template <class T>
ModelState<T> init_params(const ModelConfig& config, const InitOptions& options);

extern template struct Params<float>;
extern template struct Params<double>;
extern template ModelState<float> init_params(const ModelConfig&, const InitOptions&);
extern template ModelState<double> init_params(const ModelConfig&, const InitOptions&);

}  // namespace innerloop::nn
