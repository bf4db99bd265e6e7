#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "innerloop/nn/config.hpp"

namespace innerloop::hist {

// Which blocks a history log carries. Layers are 1-based block numbers.
struct RecordLayout {
  int d_model = 0;
  int d_ff = 0;
  int d_head = 0;
  int n_layers = 0;
  int n_heads = 0;
  int vocab = 0;
  std::vector<int> value_layers;  // u and a blocks
  std::vector<int> grad_layers;   // dL/dy and dL/db blocks
  nn::Precision precision = nn::Precision::kF32;

  static RecordLayout for_model(const nn::ModelConfig& config, std::vector<int> value_layers,
                                std::vector<int> grad_layers);

  // Number of scalars in the vector part of a record.
  std::size_t value_count() const;
  std::size_t payload_bytes() const;

  // Offsets into HistoryRecord::values; -1 when the block is absent.
  std::ptrdiff_t head_in_offset() const { return 1; }
  std::ptrdiff_t softmax_offset() const { return 1 + d_model; }
  std::ptrdiff_t attn_value_offset(int layer) const;
  std::ptrdiff_t ffn_act_offset(int layer) const;
  std::ptrdiff_t d_attn_out_offset(int layer) const;
  std::ptrdiff_t d_ffn_out_offset(int layer) const;

  bool operator==(const RecordLayout&) const = default;
  friend void to_json(nlohmann::json& j, const RecordLayout& l);
  friend void from_json(const nlohmann::json& j, RecordLayout& l);
};

// One supervised token position seen during training.
//
// Payload layout on disk (S = f32 or f64 per the header precision):
//   u64 step | u32 epoch | u32 sequence_id | u16 position | u16 seed_label
//   | u16 next_token | u16 reserved | S eta | S head_in[d_model]
//   | S softmax[vocab] | S u[d_model] per value layer
//   | S a[d_ff] per value layer | (S dy[d_model], S db[d_model]) per grad layer
// `values` holds everything from eta onward, widened to double.
struct HistoryRecord {
  std::uint64_t step = 0;
  std::uint32_t epoch = 0;
  std::uint32_t sequence_id = 0;
  std::uint16_t position = 0;
  std::uint16_t seed_label = 0;
  std::uint16_t next_token = 0;
  std::vector<double> values;

  using ConstMap = Eigen::Map<const Eigen::VectorXd>;

  double eta() const { return values[0]; }
  ConstMap head_in(const RecordLayout& l) const { return block(l.head_in_offset(), l.d_model); }
  ConstMap softmax(const RecordLayout& l) const { return block(l.softmax_offset(), l.vocab); }
  // u^{lh} for one head, or all heads concatenated when head < 0.
  ConstMap attn_value(const RecordLayout& l, int layer, int head = -1) const;
  ConstMap ffn_act(const RecordLayout& l, int layer) const;
  // dL/dy at the MHSA output; identical for every head since the head
  // outputs are summed.
  ConstMap d_attn_out(const RecordLayout& l, int layer) const;
  ConstMap d_ffn_out(const RecordLayout& l, int layer) const;

 private:
  ConstMap block(std::ptrdiff_t offset, int size) const;
};

}  // namespace innerloop::hist
