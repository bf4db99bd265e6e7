#include "innerloop/nn/model.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "innerloop/error.hpp"

namespace innerloop::nn {

namespace {

template <class T>
Mat<T> layer_norm(const Mat<T>& x, const Mat<T>& gain, double eps, NormCache<T>& cache) {
  const auto n = x.rows();
  const auto d = x.cols();
  cache.xhat.resize(n, d);
  cache.rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).mean();
    const T var = (x.row(i).array() - mean).square().mean();
    const T rstd = T(1) / std::sqrt(var + static_cast<T>(eps));
    cache.rstd(i) = rstd;
    cache.xhat.row(i) = (x.row(i).array() - mean) * rstd;
  }
  return (cache.xhat.array().rowwise() * gain.row(0).array()).matrix();
}

// Returns dL/dx; accumulates dL/dgain.
template <class T>
Mat<T> layer_norm_backward(const Mat<T>& dout, const Mat<T>& gain, const NormCache<T>& cache, Mat<T>& dgain) {
  dgain.row(0) += (dout.array() * cache.xhat.array()).colwise().sum().matrix();
  const Mat<T> dxhat = (dout.array().rowwise() * gain.row(0).array()).matrix();
  const auto d = static_cast<T>(dout.cols());
  Mat<T> dx(dout.rows(), dout.cols());
  for (Eigen::Index i = 0; i < dout.rows(); ++i) {
    const T mean_d = dxhat.row(i).sum() / d;
    const T mean_dx = (dxhat.row(i).array() * cache.xhat.row(i).array()).sum() / d;
    dx.row(i) = cache.rstd(i) * (dxhat.row(i).array() - mean_d - cache.xhat.row(i).array() * mean_dx);
  }
  return dx;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

template <class T>
T activate(T x, Activation act) {
  if (act == Activation::kRelu) return x > T(0) ? x : T(0);
  const T inner = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(inner));
}

template <class T>
T activate_grad(T x, Activation act) {
  if (act == Activation::kRelu) return x > T(0) ? T(1) : T(0);
  const T inner = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
  const T t = std::tanh(inner);
  const T dinner = static_cast<T>(kGeluC) * (T(1) + T(3) * static_cast<T>(kGeluA) * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * dinner;
}

template <class T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Mat<T> mask(rows, cols);
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.bernoulli(p) ? T(0) : keep;
  return mask;
}

template <class T>
void check_finite(const Mat<T>& m, const std::string& where) {
  if (m.allFinite()) return;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!m.row(i).allFinite())
      throw NumericError("non-finite activation at " + where + ", position " + std::to_string(i));
  }
}

}  // namespace

template <class T>
LayerTrace<T> forward_trace(const ModelState<T>& state, std::span<const TokenId> tokens, Mode mode, Rng* rng) {
  const auto& cfg = state.config;
  const auto& p = state.params;
  if (tokens.size() < 2) throw ConfigError("forward needs at least two tokens");
  const auto n = static_cast<Eigen::Index>(tokens.size() - 1);
  if (n > cfg.max_seq_len) throw ConfigError("sequence longer than max_seq_len");
  for (auto t : tokens) {
    if (t >= cfg.vocab) throw ConfigError("token id " + std::to_string(t) + " outside vocabulary");
  }
  const bool train = mode == Mode::kTrain && cfg.dropout > 0.0;
  if (train && rng == nullptr) throw ConfigError("train-mode forward requires an rng");
  const double pdrop = cfg.dropout;
  const int d = cfg.d_model;
  const int dh = cfg.d_head();
  const T scale = cfg.attn_scale ? static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))) : T(1);

  LayerTrace<T> tr;
  tr.inputs.assign(tokens.begin(), tokens.end() - 1);
  tr.targets.assign(tokens.begin() + 1, tokens.end());

  Mat<T> x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = p.tok_emb.row(tr.inputs[static_cast<std::size_t>(i)]) + p.pos_emb.row(i);
  if (train) {
    tr.embed_mask = dropout_mask<T>(n, d, pdrop, *rng);
    x.array() *= tr.embed_mask.array();
  }
  tr.z.push_back(x);

  const bool pre = cfg.norm_placement == NormPlacement::kPre;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& lp = p.layers[static_cast<std::size_t>(l)];
    BlockTrace<T> b;
    b.input = tr.z.back();
    b.attn_in = pre ? layer_norm(b.input, lp.ln1_gain, cfg.layer_norm_eps, b.norm1) : b.input;
    b.q.noalias() = b.attn_in * lp.wq.transpose();
    b.k.noalias() = b.attn_in * lp.wk.transpose();
    b.v.noalias() = b.attn_in * lp.wv.transpose();
    b.attn_value.resize(n, d);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const auto qh = b.q.middleCols(h * dh, dh);
      const auto kh = b.k.middleCols(h * dh, dh);
      const auto vh = b.v.middleCols(h * dh, dh);
      Mat<T> probs = Mat<T>::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        auto row = probs.row(i).head(i + 1);
        row.noalias() = (kh.topRows(i + 1) * qh.row(i).transpose()).transpose() * scale;
        const T mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        row /= row.sum();
      }
      Mat<T> used = probs;
      if (train) {
        b.probs_mask.push_back(dropout_mask<T>(n, n, pdrop, *rng));
        used.array() *= b.probs_mask.back().array();
      }
      b.attn_value.middleCols(h * dh, dh).noalias() = used * vh;
      b.probs.push_back(std::move(probs));
    }
    b.attn_out.noalias() = b.attn_value * lp.wo.transpose();
    Mat<T> attn_res = b.attn_out;
    if (train) {
      b.attn_out_mask = dropout_mask<T>(n, d, pdrop, *rng);
      attn_res.array() *= b.attn_out_mask.array();
    }
    if (pre) {
      b.mid = b.input + attn_res;
      b.ffn_in = layer_norm(b.mid, lp.ln2_gain, cfg.layer_norm_eps, b.norm2);
    } else {
      b.sum1 = b.input + attn_res;
      b.mid = layer_norm(b.sum1, lp.ln1_gain, cfg.layer_norm_eps, b.norm1);
      b.ffn_in = b.mid;
    }
    b.ffn_pre.noalias() = b.ffn_in * lp.w1.transpose();
    b.ffn_act = b.ffn_pre.unaryExpr([&](T v) { return activate(v, cfg.activation); });
    b.ffn_out.noalias() = b.ffn_act * lp.w2.transpose();
    Mat<T> ffn_res = b.ffn_out;
    if (train) {
      b.ffn_out_mask = dropout_mask<T>(n, d, pdrop, *rng);
      ffn_res.array() *= b.ffn_out_mask.array();
    }
    Mat<T> out;
    if (pre) {
      out = b.mid + ffn_res;
    } else {
      b.sum2 = b.mid + ffn_res;
      out = layer_norm(b.sum2, lp.ln2_gain, cfg.layer_norm_eps, b.norm2);
    }
    check_finite(out, "layer " + std::to_string(l + 1));
    tr.blocks.push_back(std::move(b));
    tr.z.push_back(std::move(out));
  }

  tr.head_in = cfg.final_norm_before_head ? layer_norm(tr.z.back(), p.final_gain, cfg.layer_norm_eps, tr.final_norm)
                                          : tr.z.back();
  tr.logits.noalias() = tr.head_in * p.lm_head.transpose();
  check_finite(tr.logits, "lm head");
  tr.softmax.resize(n, cfg.vocab);
  tr.loss.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mx = tr.logits.row(i).maxCoeff();
    tr.softmax.row(i) = (tr.logits.row(i).array() - mx).exp();
    const T sum = tr.softmax.row(i).sum();
    tr.softmax.row(i) /= sum;
    const auto target = tr.targets[static_cast<std::size_t>(i)];
    // log-sum-exp form keeps the loss accurate when s[target] underflows.
    tr.loss[static_cast<std::size_t>(i)] =
        static_cast<double>(std::log(sum)) + static_cast<double>(mx) - static_cast<double>(tr.logits(i, target));
  }
  return tr;
}

template <class T>
Gradients<T> backward(const ModelState<T>& state, const LayerTrace<T>& tr) {
  const auto& cfg = state.config;
  const auto& p = state.params;
  const auto n = static_cast<Eigen::Index>(tr.positions());
  const int dh = cfg.d_head();
  const T scale = cfg.attn_scale ? static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))) : T(1);
  const bool pre = cfg.norm_placement == NormPlacement::kPre;

  Gradients<T> g;
  g.params = Params<T>::zeros(cfg);
  g.d_attn_out.resize(static_cast<std::size_t>(cfg.n_layers));
  g.d_ffn_out.resize(static_cast<std::size_t>(cfg.n_layers));

  g.d_logits = tr.softmax;
  for (Eigen::Index i = 0; i < n; ++i) g.d_logits(i, tr.targets[static_cast<std::size_t>(i)]) -= T(1);
  g.params.lm_head.noalias() = g.d_logits.transpose() * tr.head_in;
  Mat<T> dz = g.d_logits * p.lm_head;
  if (cfg.final_norm_before_head) dz = layer_norm_backward(dz, p.final_gain, tr.final_norm, g.params.final_gain);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const auto& lp = p.layers[li];
    const auto& b = tr.blocks[li];
    auto& gp = g.params.layers[li];

    // Gradient w.r.t. the residual carrying the FFN output.
    Mat<T> d_sum2 = pre ? dz : layer_norm_backward(dz, lp.ln2_gain, b.norm2, gp.ln2_gain);
    Mat<T> d_b = d_sum2;
    if (b.ffn_out_mask.size()) d_b.array() *= b.ffn_out_mask.array();
    gp.w2.noalias() = d_b.transpose() * b.ffn_act;
    Mat<T> d_pre = d_b * lp.w2;
    for (Eigen::Index i = 0; i < d_pre.size(); ++i) d_pre.data()[i] *= activate_grad(b.ffn_pre.data()[i], cfg.activation);
    gp.w1.noalias() = d_pre.transpose() * b.ffn_in;
    const Mat<T> d_ffn_in = d_pre * lp.w1;
    g.d_ffn_out[li] = std::move(d_b);

    Mat<T> d_mid;
    if (pre) {
      d_mid = d_sum2 + layer_norm_backward(d_ffn_in, lp.ln2_gain, b.norm2, gp.ln2_gain);
    } else {
      d_mid = d_sum2 + d_ffn_in;
    }
    Mat<T> d_sum1 = pre ? d_mid : layer_norm_backward(d_mid, lp.ln1_gain, b.norm1, gp.ln1_gain);
    Mat<T> d_y = d_sum1;
    if (b.attn_out_mask.size()) d_y.array() *= b.attn_out_mask.array();
    gp.wo.noalias() = d_y.transpose() * b.attn_value;
    const Mat<T> d_u = d_y * lp.wo;
    g.d_attn_out[li] = std::move(d_y);

    Mat<T> dq(n, cfg.d_model), dk(n, cfg.d_model), dv(n, cfg.d_model);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const auto hi = static_cast<std::size_t>(h);
      const auto qh = b.q.middleCols(h * dh, dh);
      const auto kh = b.k.middleCols(h * dh, dh);
      const auto vh = b.v.middleCols(h * dh, dh);
      const auto duh = d_u.middleCols(h * dh, dh);
      const Mat<T>& probs = b.probs[hi];
      Mat<T> d_probs = duh * vh.transpose();
      if (b.probs_mask.size()) {
        const Mat<T> used = (probs.array() * b.probs_mask[hi].array()).matrix();
        dv.middleCols(h * dh, dh).noalias() = used.transpose() * duh;
        d_probs.array() *= b.probs_mask[hi].array();
      } else {
        dv.middleCols(h * dh, dh).noalias() = probs.transpose() * duh;
      }
      Mat<T> d_scores = Mat<T>::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto pr = probs.row(i).head(i + 1).array();
        const auto dpr = d_probs.row(i).head(i + 1).array();
        const T dot = (pr * dpr).sum();
        d_scores.row(i).head(i + 1) = (pr * (dpr - dot)).matrix() * scale;
      }
      dq.middleCols(h * dh, dh).noalias() = d_scores * kh;
      dk.middleCols(h * dh, dh).noalias() = d_scores.transpose() * qh;
    }
    gp.wq.noalias() = dq.transpose() * b.attn_in;
    gp.wk.noalias() = dk.transpose() * b.attn_in;
    gp.wv.noalias() = dv.transpose() * b.attn_in;
    Mat<T> d_attn_in = dq * lp.wq;
    d_attn_in.noalias() += dk * lp.wk;
    d_attn_in.noalias() += dv * lp.wv;

    if (pre) {
      dz = d_sum1 + layer_norm_backward(d_attn_in, lp.ln1_gain, b.norm1, gp.ln1_gain);
    } else {
      dz = d_sum1 + d_attn_in;
    }
  }

  if (tr.embed_mask.size()) dz.array() *= tr.embed_mask.array();
  for (Eigen::Index i = 0; i < n; ++i) {
    g.params.tok_emb.row(tr.inputs[static_cast<std::size_t>(i)]) += dz.row(i);
    g.params.pos_emb.row(i) += dz.row(i);
  }
  return g;
}

template <class T>
std::pair<LayerTrace<T>, Gradients<T>> forward_backward(const ModelState<T>& state, std::span<const TokenId> tokens,
                                                        Rng* rng) {
  auto trace = forward_trace(state, tokens, rng ? Mode::kTrain : Mode::kEval, rng);
  auto grads = backward(state, trace);
  return {std::move(trace), std::move(grads)};
}

template <class T>
Mat<T> head_logits(const ModelState<T>& state, const Mat<T>& z, bool apply_final_norm) {
  if (apply_final_norm) {
    NormCache<T> cache;
    const Mat<T> normed = layer_norm(z, state.params.final_gain, state.config.layer_norm_eps, cache);
    return normed * state.params.lm_head.transpose();
  }
  return z * state.params.lm_head.transpose();
}

template LayerTrace<float> forward_trace(const ModelState<float>&, std::span<const TokenId>, Mode, Rng*);
template LayerTrace<double> forward_trace(const ModelState<double>&, std::span<const TokenId>, Mode, Rng*);
template Gradients<float> backward(const ModelState<float>&, const LayerTrace<float>&);
template Gradients<double> backward(const ModelState<double>&, const LayerTrace<double>&);
template std::pair<LayerTrace<float>, Gradients<float>> forward_backward(const ModelState<float>&,
                                                                         std::span<const TokenId>, Rng*);
template std::pair<LayerTrace<double>, Gradients<double>> forward_backward(const ModelState<double>&,
                                                                           std::span<const TokenId>, Rng*);
template Mat<float> head_logits(const ModelState<float>&, const Mat<float>&, bool);
template Mat<double> head_logits(const ModelState<double>&, const Mat<double>&, bool);

}  // namespace innerloop::nn
