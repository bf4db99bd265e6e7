#include "innerloop/nn/trainer.hpp"

#include <numeric>

#include "innerloop/nn/checkpoint.hpp"
#include "innerloop/nn/optim.hpp"

namespace innerloop::nn {

namespace {
constexpr std::uint64_t kShuffleSalt = 0x5348554646ULL;
constexpr std::uint64_t kDropoutSalt = 0x44524f50ULL;
}  // namespace

template <class T>
EpochSummary train_epoch(ModelState<T>& state, const std::vector<synthlang::TokenSequence>& train,
                         const TrainConfig& config, HistorySink<T>* sink,
                         const std::optional<std::string>& abort_checkpoint) {
  config.validate();
  const int epoch = state.epoch;
  std::vector<std::uint32_t> order(train.size());
  std::iota(order.begin(), order.end(), 0u);
  Rng shuffle_rng(derive_seed(config.rng_seed, kShuffleSalt + static_cast<std::uint64_t>(epoch)));
  shuffle_rng.shuffle(order.begin(), order.end());
  Rng dropout_rng(derive_seed(config.rng_seed, kDropoutSalt + static_cast<std::uint64_t>(epoch)));

  if (config.optimizer == OptimizerKind::kAdamW && !state.adam) {
    state.adam = AdamState<T>{Params<T>::zeros(state.config), Params<T>::zeros(state.config), 0};
  }

  // Snapshot for a resumable abort; only kept when a sink can fail.
  std::optional<ModelState<T>> snapshot;
  if (sink != nullptr && abort_checkpoint) snapshot = state;

  EpochSummary summary;
  summary.epoch = epoch;
  summary.lr = config.lr_at_epoch(epoch);
  double loss_sum = 0.0;
  for (auto idx : order) {
    const auto& seq = train[idx];
    auto [trace, grads] = forward_backward<T>(state, seq.tokens, &dropout_rng);
    StepInfo info;
    info.epoch = epoch;
    info.sequence_id = idx;
    info.seed_label = seq.seed_id;
    info.first_step = state.token_step;
    info.lr = summary.lr;
    info.grad_norm = global_norm(grads.params);
    info.clip = clip_scale(info.grad_norm, config.max_grad_norm);
    if (info.clip < 1.0) ++summary.clipped;

    if (sink != nullptr) {
      try {
        sink->on_sequence(info, trace, grads);
      } catch (const std::exception& e) {
        std::string where;
        if (snapshot && abort_checkpoint) {
          save_checkpoint(*snapshot, *abort_checkpoint);
          where = *abort_checkpoint;
        }
        throw TrainingAborted("history sink failed during epoch " + std::to_string(epoch) + ": " + e.what(), where);
      }
    }

    if (config.optimizer == OptimizerKind::kSgd) {
      sgd_step(state.params, grads.params, info.eta());
    } else {
      adamw_step(state.params, *state.adam, grads.params, info.clip, info.lr, config.weight_decay, config.adam_beta1,
                 config.adam_beta2, config.adam_eps);
    }
    loss_sum += trace.total_loss();
    summary.tokens += trace.loss.size();
    state.token_step += trace.loss.size();
    ++summary.sequences;
  }
  summary.mean_loss = summary.tokens ? loss_sum / static_cast<double>(summary.tokens) : 0.0;
  ++state.epoch;
  return summary;
}

template <class T>
double evaluate_loss(const ModelState<T>& state, const std::vector<synthlang::TokenSequence>& sequences) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& seq : sequences) {
    const auto trace = forward_trace(state, seq.tokens, Mode::kEval);
    sum += trace.total_loss();
    count += trace.loss.size();
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

template EpochSummary train_epoch(ModelState<float>&, const std::vector<synthlang::TokenSequence>&,
                                  const TrainConfig&, HistorySink<float>*, const std::optional<std::string>&);
template EpochSummary train_epoch(ModelState<double>&, const std::vector<synthlang::TokenSequence>&,
                                  const TrainConfig&, HistorySink<double>*, const std::optional<std::string>&);
template double evaluate_loss(const ModelState<float>&, const std::vector<synthlang::TokenSequence>&);
template double evaluate_loss(const ModelState<double>&, const std::vector<synthlang::TokenSequence>&);

}  // namespace innerloop::nn
