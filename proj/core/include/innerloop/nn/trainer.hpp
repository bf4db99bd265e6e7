#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "innerloop/error.hpp"
#include "innerloop/nn/config.hpp"
#include "innerloop/nn/model.hpp"
#include "innerloop/synthlang/dataset.hpp"

namespace innerloop::nn {

// Bookkeeping for one optimizer update (one training sequence).
struct StepInfo {
  int epoch = 0;
  std::uint32_t sequence_id = 0;  // index into the training split
  int seed_label = 0;
  std::uint64_t first_step = 0;   // token step of position 0
  double lr = 0.0;                // scheduled learning rate
  double clip = 1.0;              // gradient clipping factor
  double grad_norm = 0.0;         // before clipping
  // Effective per-token learning rate lr * clip.
  double eta() const { return lr * clip; }
};

// Receives the trace and gradients of every update before the weights
// change. Implementations must not keep references past the call.
template <class T>
class HistorySink {
 public:
  virtual ~HistorySink() = default;
  virtual void on_sequence(const StepInfo& info, const LayerTrace<T>& trace, const Gradients<T>& grads) = 0;
};

struct EpochSummary {
  int epoch = 0;
  double mean_loss = 0.0;  // per supervised token, train-mode forward
  double lr = 0.0;
  std::size_t sequences = 0;
  std::size_t tokens = 0;
  std::size_t clipped = 0;  // updates whose gradient was rescaled
};

// Thrown when the history sink fails mid-epoch. The model state as of the
// start of the epoch was written to `checkpoint_path` (if one was given).
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, std::string checkpoint_path)
      : Error(what), checkpoint_path(std::move(checkpoint_path)) {}
  std::string checkpoint_path;
};

// One pass over `train` in a seeded shuffled order, batch size 1, one
// update per sequence on the summed token losses. Advances state.epoch.
template <class T>
EpochSummary train_epoch(ModelState<T>& state, const std::vector<synthlang::TokenSequence>& train,
                         const TrainConfig& config, HistorySink<T>* sink = nullptr,
                         const std::optional<std::string>& abort_checkpoint = std::nullopt);

// Mean per-token eval-mode loss.
template <class T>
double evaluate_loss(const ModelState<T>& state, const std::vector<synthlang::TokenSequence>& sequences);

}  // namespace innerloop::nn
