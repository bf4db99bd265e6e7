#include "innerloop/nn/params.hpp"

#include <cmath>

#include "innerloop/util/rng.hpp"

namespace innerloop::nn {

template <class T>
Params<T> Params<T>::zeros(const ModelConfig& c) {
  Params p;
  p.tok_emb = Mat<T>::Zero(c.vocab, c.d_model);
  p.pos_emb = Mat<T>::Zero(c.max_seq_len, c.d_model);
  p.layers.resize(static_cast<std::size_t>(c.n_layers));
  for (auto& l : p.layers) {
    l.ln1_gain = Mat<T>::Zero(1, c.d_model);
    l.ln2_gain = Mat<T>::Zero(1, c.d_model);
    l.wq = Mat<T>::Zero(c.d_model, c.d_model);
    l.wk = Mat<T>::Zero(c.d_model, c.d_model);
    l.wv = Mat<T>::Zero(c.d_model, c.d_model);
    l.wo = Mat<T>::Zero(c.d_model, c.d_model);
    l.w1 = Mat<T>::Zero(c.d_ff, c.d_model);
    l.w2 = Mat<T>::Zero(c.d_model, c.d_ff);
  }
  p.final_gain = Mat<T>::Zero(1, c.d_model);
  p.lm_head = Mat<T>::Zero(c.vocab, c.d_model);
  return p;
}

template <class T>
ModelState<T> init_params(const ModelConfig& config, const InitOptions& options) {
  config.validate();
  ModelState<T> state;
  state.config = config;
  state.params = Params<T>::zeros(config);
  Rng rng(options.rng_seed);
  auto fill = [&](Mat<T>& m, int fan_in) {
    const double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(std * rng.normal());
  };
  auto& p = state.params;
  fill(p.tok_emb, config.d_model);
  fill(p.pos_emb, config.d_model);
  for (auto& l : p.layers) {
    l.ln1_gain.setOnes();
    l.ln2_gain.setOnes();
    fill(l.wq, config.d_model);
    fill(l.wk, config.d_model);
    fill(l.wv, config.d_model);
    fill(l.wo, config.d_model);
    fill(l.w1, config.d_model);
    fill(l.w2, config.d_ff);
    if (options.zero_out_proj) l.wo.setZero();
  }
  p.final_gain.setOnes();
  fill(p.lm_head, config.d_model);
  if (options.zero_lm_head) p.lm_head.setZero();
  return state;
}

template struct Params<float>;
template struct Params<double>;
template ModelState<float> init_params(const ModelConfig&, const InitOptions&);
template ModelState<double> init_params(const ModelConfig&, const InitOptions&);

}  // namespace innerloop::nn
