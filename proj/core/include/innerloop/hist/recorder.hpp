#pragma once

#include "innerloop/hist/log.hpp"
#include "innerloop/nn/trainer.hpp"

namespace innerloop::hist {

// Appends one record per supervised position of a training sequence
// (position i predicts token i+1). Vectors are the post-dropout values that
// entered the weight matrices in that update.
template <class T>
void append_records(HistoryWriter& log, const nn::StepInfo& info, const nn::LayerTrace<T>& trace,
                    const nn::Gradients<T>& grads);

// Training sink that writes records for epochs divisible by the stride.
template <class T>
class HistoryRecorder final : public nn::HistorySink<T> {
 public:
  explicit HistoryRecorder(HistoryWriter& log) : log_(log) {}
  void on_sequence(const nn::StepInfo& info, const nn::LayerTrace<T>& trace, const nn::Gradients<T>& grads) override;

 private:
  HistoryWriter& log_;
};

}  // namespace innerloop::hist
