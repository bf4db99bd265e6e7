#include "innerloop/hist/recorder.hpp"

namespace innerloop::hist {

template <class T>
void append_records(HistoryWriter& log, const nn::StepInfo& info, const nn::LayerTrace<T>& trace,
                    const nn::Gradients<T>& grads) {
  const auto& l = log.header().layout;
  HistoryRecord r;
  r.values.assign(l.value_count(), 0.0);
  const int n = trace.positions();
  auto put = [&](std::ptrdiff_t off, const auto& row) {
    for (Eigen::Index j = 0; j < row.size(); ++j) r.values[static_cast<std::size_t>(off + j)] = static_cast<double>(row(j));
  };
  for (int i = 0; i < n; ++i) {
    r.step = info.first_step + static_cast<std::uint64_t>(i);
    r.epoch = static_cast<std::uint32_t>(info.epoch);
    r.sequence_id = info.sequence_id;
    r.position = static_cast<std::uint16_t>(i);
    r.seed_label = static_cast<std::uint16_t>(info.seed_label);
    r.next_token = static_cast<std::uint16_t>(trace.targets[static_cast<std::size_t>(i)]);
    r.values[0] = info.eta();
    put(l.head_in_offset(), trace.head_in.row(i));
    put(l.softmax_offset(), trace.softmax.row(i));
    for (int layer : l.value_layers) {
      const auto& b = trace.blocks[static_cast<std::size_t>(layer - 1)];
      put(l.attn_value_offset(layer), b.attn_value.row(i));
      put(l.ffn_act_offset(layer), b.ffn_act.row(i));
    }
    for (int layer : l.grad_layers) {
      const auto li = static_cast<std::size_t>(layer - 1);
      put(l.d_attn_out_offset(layer), grads.d_attn_out[li].row(i));
      put(l.d_ffn_out_offset(layer), grads.d_ffn_out[li].row(i));
    }
    log.append(r);
  }
}

template <class T>
void HistoryRecorder<T>::on_sequence(const nn::StepInfo& info, const nn::LayerTrace<T>& trace,
                                     const nn::Gradients<T>& grads) {
  if (info.epoch % log_.header().stride != 0) return;
  append_records(log_, info, trace, grads);
}

template void append_records(HistoryWriter&, const nn::StepInfo&, const nn::LayerTrace<float>&,
                             const nn::Gradients<float>&);
template void append_records(HistoryWriter&, const nn::StepInfo&, const nn::LayerTrace<double>&,
                             const nn::Gradients<double>&);
template class HistoryRecorder<float>;
template class HistoryRecorder<double>;

}  // namespace innerloop::hist
