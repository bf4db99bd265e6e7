#include "innerloop/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "innerloop/error.hpp"
#include "innerloop/nn/model.hpp"

namespace innerloop::nn {

ModelConfig grad_check_config() {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.max_seq_len = 16;
  c.dropout = 0.0;
  c.precision = Precision::kF64;
  return c;
}

namespace {

template <class T>
GradCheckReport run(const ModelConfig& config, const GradCheckOptions& opt) {
  GradCheckReport report;
  report.epsilon = opt.epsilon > 0 ? opt.epsilon : 1e-5;
  report.floor = opt.floor > 0 ? opt.floor : (std::is_same_v<T, double> ? 1e-6 : 1e-3);

  auto state = init_params<T>(config, InitOptions{opt.seed});
  Rng token_rng(derive_seed(opt.seed, 1));
  std::vector<TokenId> tokens;
  const int len = std::min(opt.sequence_length, config.max_seq_len + 1);
  for (int i = 0; i < len; ++i) tokens.push_back(static_cast<TokenId>(token_rng.below(static_cast<std::uint64_t>(config.vocab))));

  const bool dropout = opt.with_dropout && config.dropout > 0.0;
  const auto mask_seed = derive_seed(opt.seed, 2);
  // Differences are always taken in double: single-precision losses are too
  // coarse for a central difference. A float model is checked against the
  // same weights widened to double.
  ModelState<double> probe;
  if constexpr (std::is_same_v<T, double>) {
    probe = state;
  } else {
    probe.config = config;
    probe.config.precision = Precision::kF64;
    probe.params = state.params.template cast<double>();
  }
  auto loss = [&](const ModelState<double>& s) {
    Rng rng(mask_seed);
    return forward_trace(s, tokens, dropout ? Mode::kTrain : Mode::kEval, dropout ? &rng : nullptr).total_loss();
  };
  Gradients<T> grads;
  {
    Rng rng(mask_seed);
    const auto trace = forward_trace(state, tokens, dropout ? Mode::kTrain : Mode::kEval, dropout ? &rng : nullptr);
    grads = backward(state, trace);
  }

  std::vector<const Mat<T>*> analytic;
  grads.params.visit([&](std::string_view, const Mat<T>& m) { analytic.push_back(&m); });
  std::size_t k = 0;
  probe.params.visit([&](std::string_view name, MatD& m) {
    GroupError ge;
    ge.name = std::string(name);
    const auto total = static_cast<std::size_t>(m.size());
    const std::size_t stride =
        (opt.max_entries_per_group == 0 || total <= opt.max_entries_per_group) ? 1 : total / opt.max_entries_per_group;
    for (std::size_t i = 0; i < total; i += stride) {
      const double orig = m.data()[i];
      m.data()[i] = orig + report.epsilon;
      const double up = loss(probe);
      m.data()[i] = orig - report.epsilon;
      const double down = loss(probe);
      m.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * report.epsilon);
      const double a = static_cast<double>(analytic[k]->data()[i]);
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), report.floor});
      ge.max_abs_error = std::max(ge.max_abs_error, abs_err);
      ge.max_rel_error = std::max(ge.max_rel_error, rel);
      ++ge.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, ge.max_rel_error);
    report.groups.push_back(std::move(ge));
    ++k;
  });
  return report;
}

}  // namespace

GradCheckReport grad_check(const ModelConfig& config, const GradCheckOptions& options) {
  config.validate();
  if (config.precision == Precision::kF64) return run<double>(config, options);
  return run<float>(config, options);
}

}  // namespace innerloop::nn
