#include "innerloop/hist/dual.hpp"

#include "innerloop/error.hpp"

namespace innerloop::hist {

std::string WeightRef::name() const {
  switch (kind) {
    case Kind::kLmHead:
      return "lm_head";
    case Kind::kOutProj:
      return "layer" + std::to_string(layer) + ".wo" + (head >= 0 ? "[head " + std::to_string(head) + "]" : "");
    case Kind::kFfnOut:
      return "layer" + std::to_string(layer) + ".w2";
  }
  return "?";
}

namespace {

void check_layer(const nn::ModelConfig& c, const WeightRef& w) {
  if (w.kind == WeightRef::Kind::kLmHead) return;
  if (w.layer < 1 || w.layer > c.n_layers)
    throw ConfigError("layer " + std::to_string(w.layer) + " outside [1, " + std::to_string(c.n_layers) + "]");
  if (w.kind == WeightRef::Kind::kOutProj && w.head >= c.n_heads)
    throw ConfigError("head " + std::to_string(w.head) + " outside [0, " + std::to_string(c.n_heads) + ")");
}

void check_sgd_full(const LogHeader& h) {
  if (h.optimizer != nn::OptimizerKind::kSgd)
    throw ContractError("dual form is exact only for plain SGD; log was written by " + nn::to_string(h.optimizer));
  if (h.stride != 1)
    throw ContractError("dual form needs every update; log records one epoch in " + std::to_string(h.stride));
}

}  // namespace

nn::MatD select_weight(const nn::Params<double>& p, const nn::ModelConfig& c, const WeightRef& w) {
  check_layer(c, w);
  switch (w.kind) {
    case WeightRef::Kind::kLmHead:
      return p.lm_head;
    case WeightRef::Kind::kOutProj: {
      const auto& wo = p.layers[static_cast<std::size_t>(w.layer - 1)].wo;
      if (w.head < 0) return wo;
      return wo.middleCols(static_cast<Eigen::Index>(w.head) * c.d_head(), c.d_head());
    }
    case WeightRef::Kind::kFfnOut:
      return p.layers[static_cast<std::size_t>(w.layer - 1)].w2;
  }
  throw ContractError("unknown weight kind");
}

std::vector<nn::MatD> reconstruct_weights(HistoryReader& log, const std::vector<WeightRef>& which,
                                          std::vector<nn::MatD> W, std::optional<std::uint64_t> up_to_step) {
  const auto& h = log.header();
  const auto& l = h.layout;
  check_sgd_full(h);
  if (which.size() != W.size()) throw ConfigError("one initial matrix per weight required");
  for (std::size_t k = 0; k < which.size(); ++k) {
    const auto& w = which[k];
    check_layer(h.model, w);
    Eigen::Index rows = l.d_model, cols = l.d_model;
    switch (w.kind) {
      case WeightRef::Kind::kLmHead:
        rows = l.vocab;
        break;
      case WeightRef::Kind::kOutProj:
        if (l.attn_value_offset(w.layer) < 0 || l.d_attn_out_offset(w.layer) < 0)
          throw ContractError("log lacks the MHSA blocks of layer " + std::to_string(w.layer) +
                              " (not recorded; record values and gradients for it)");
        if (w.head >= 0) cols = l.d_head;
        break;
      case WeightRef::Kind::kFfnOut:
        if (l.ffn_act_offset(w.layer) < 0 || l.d_ffn_out_offset(w.layer) < 0)
          throw ContractError("log lacks the FFN blocks of layer " + std::to_string(w.layer) +
                              " (not recorded; record values and gradients for it)");
        cols = l.d_ff;
        break;
    }
    if (W[k].rows() != rows || W[k].cols() != cols)
      throw ConfigError("initial matrix for " + w.name() + " has the wrong shape");
  }
  RecordFilter f;
  f.max_step = up_to_step;
  Eigen::VectorXd g;
  log.for_each(f, [&](const HistoryRecord& r) {
    const double eta = r.eta();
    for (std::size_t k = 0; k < which.size(); ++k) {
      const auto& w = which[k];
      switch (w.kind) {
        case WeightRef::Kind::kLmHead:
          g = r.softmax(l);
          g(r.next_token) -= 1.0;
          W[k].noalias() -= eta * g * r.head_in(l).transpose();
          break;
        case WeightRef::Kind::kOutProj:
          W[k].noalias() -= eta * r.d_attn_out(l, w.layer) * r.attn_value(l, w.layer, w.head).transpose();
          break;
        case WeightRef::Kind::kFfnOut:
          W[k].noalias() -= eta * r.d_ffn_out(l, w.layer) * r.ffn_act(l, w.layer).transpose();
          break;
      }
    }
  });
  if (log.truncated()) throw FormatError(log.path() + ": history log is truncated or corrupt");
  return W;
}

nn::MatD reconstruct_weight(HistoryReader& log, const WeightRef& which, const nn::MatD& initial,
                            std::optional<std::uint64_t> up_to_step) {
  return reconstruct_weights(log, {which}, {initial}, up_to_step).front();
}

nn::MatD dual_head_logits(HistoryReader& log, const nn::MatD& queries, std::optional<std::uint64_t> up_to_step,
                          bool* empty_history) {
  const auto& h = log.header();
  const auto& l = h.layout;
  check_sgd_full(h);
  if (queries.cols() != l.d_model)
    throw ConfigError("query width " + std::to_string(queries.cols()) + " != d_model " + std::to_string(l.d_model));
  nn::MatD out = nn::MatD::Zero(queries.rows(), l.vocab);
  RecordFilter f;
  f.max_step = up_to_step;
  Eigen::VectorXd e;
  const auto n = log.for_each(f, [&](const HistoryRecord& r) {
    e = -r.softmax(l);
    e(r.next_token) += 1.0;
    const Eigen::VectorXd attn = queries * r.head_in(l);  // z_t^T q for every query
    out.noalias() += r.eta() * attn * e.transpose();
  });
  if (log.truncated()) throw FormatError(log.path() + ": history log is truncated or corrupt");
  if (empty_history) *empty_history = n == 0;
  return out;
}

namespace {

template <class F>
std::vector<WeightEntry> collect(HistoryReader& log, std::optional<std::uint64_t> up_to_step, F weight) {
  std::vector<WeightEntry> out;
  RecordFilter f;
  f.max_step = up_to_step;
  log.for_each(f, [&](const HistoryRecord& r) {
    out.push_back({r.step, r.epoch, r.seed_label, r.next_token, weight(r)});
  });
  if (log.truncated()) throw FormatError(log.path() + ": history log is truncated or corrupt");
  return out;
}

}  // namespace

std::vector<WeightEntry> mhsa_weights(HistoryReader& log, int layer, int head, const Eigen::VectorXd& u_query,
                                      std::optional<std::uint64_t> up_to_step) {
  const auto& l = log.layout();
  if (l.attn_value_offset(layer) < 0)
    throw ContractError("log lacks attention values of layer " + std::to_string(layer));
  if (head < 0 || head >= l.n_heads) throw ConfigError("head " + std::to_string(head) + " out of range");
  if (u_query.size() != l.d_head) throw ConfigError("query size does not match d_head");
  return collect(log, up_to_step, [&](const HistoryRecord& r) { return r.attn_value(l, layer, head).dot(u_query); });
}

std::vector<WeightEntry> ffn_weights(HistoryReader& log, int layer, const Eigen::VectorXd& a_query,
                                     std::optional<std::uint64_t> up_to_step) {
  const auto& l = log.layout();
  if (l.ffn_act_offset(layer) < 0) throw ContractError("log lacks FFN activations of layer " + std::to_string(layer));
  if (a_query.size() != l.d_ff) throw ConfigError("query size does not match d_ff");
  return collect(log, up_to_step, [&](const HistoryRecord& r) { return r.ffn_act(l, layer).dot(a_query); });
}

}  // namespace innerloop::hist
