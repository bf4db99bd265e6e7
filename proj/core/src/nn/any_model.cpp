#include "innerloop/nn/any_model.hpp"

#include <cmath>

namespace innerloop::nn {

template <class T>
ProbeTrace to_probe_trace(const LayerTrace<T>& t) {
  ProbeTrace p;
  p.inputs = t.inputs;
  p.targets = t.targets;
  for (const auto& z : t.z) p.z.push_back(z.template cast<double>());
  for (const auto& b : t.blocks) {
    p.attn_in.push_back(b.attn_in.template cast<double>());
    p.attn_value.push_back(b.attn_value.template cast<double>());
    p.ffn_act.push_back(b.ffn_act.template cast<double>());
    std::vector<MatD> heads;
    for (const auto& pr : b.probs) heads.push_back(pr.template cast<double>());
    p.probs.push_back(std::move(heads));
  }
  p.head_in = t.head_in.template cast<double>();
  p.logits = t.logits.template cast<double>();
  p.softmax = t.softmax.template cast<double>();
  p.loss = t.loss;
  return p;
}

template ProbeTrace to_probe_trace(const LayerTrace<float>&);
template ProbeTrace to_probe_trace(const LayerTrace<double>&);

Model Model::load(const std::string& checkpoint_path) { return Model(load_any_checkpoint(checkpoint_path)); }

const ModelConfig& Model::config() const {
  return std::visit([](const auto& s) -> const ModelConfig& { return s.config; }, state_);
}

int Model::epoch() const {
  return std::visit([](const auto& s) { return s.epoch; }, state_);
}

ProbeTrace Model::probe(std::span<const TokenId> tokens) const {
  return std::visit([&](const auto& s) { return to_probe_trace(forward_trace(s, tokens, Mode::kEval)); }, state_);
}

MatD Model::head_logits(const MatD& z, bool apply_final_norm) const {
  return std::visit(
      [&](const auto& s) -> MatD {
        using T = typename std::decay_t<decltype(s.params.lm_head)>::Scalar;
        const bool norm = apply_final_norm && s.config.final_norm_before_head;
        return nn::head_logits(s, Mat<T>(z.template cast<T>()), norm).template cast<double>();
      },
      state_);
}

MatD Model::final_norm(const MatD& z) const {
  const auto& c = config();
  if (!c.final_norm_before_head) return z;
  const auto p = params();
  MatD out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mean = z.row(i).mean();
    const double var = (z.row(i).array() - mean).square().mean();
    out.row(i) = (z.row(i).array() - mean) / std::sqrt(var + c.layer_norm_eps) * p.final_gain.row(0).array();
  }
  return out;
}

Params<double> Model::params() const {
  return std::visit([](const auto& s) { return s.params.template cast<double>(); }, state_);
}

}  // namespace innerloop::nn
