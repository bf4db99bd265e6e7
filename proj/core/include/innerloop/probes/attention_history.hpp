#pragma once

#include <cstdint>
#include <vector>

#include "innerloop/hist/log.hpp"
#include "innerloop/nn/any_model.hpp"
#include "innerloop/probes/probe_set.hpp"

namespace innerloop::probes {

enum class ModuleKind { kMhsa, kFfn };
std::string to_string(ModuleKind k);

struct AttentionHistoryOptions {
  int top_k = 10;
  // Records with epoch < before_epoch are ranked; usually the checkpoint epoch.
  std::uint32_t before_epoch = 0;
};

// Same-label percentages for one layer and module, averaged over heads
// (equal weight) and then over probe instances.
struct AttentionHistoryCell {
  int layer = 0;  // 1-based
  ModuleKind module = ModuleKind::kMhsa;
  double top_same_seed = 0.0;
  double bottom_same_seed = 0.0;
  double top_same_combination = 0.0;
  double bottom_same_combination = 0.0;
};

struct AttentionHistoryResult {
  std::vector<AttentionHistoryCell> cells;  // layer-major, MHSA before FFN
  std::uint64_t history_records = 0;
  std::size_t instances = 0;
};

// Ranks history records by the weighting factors of each probe instance
// and measures label agreement among the top-k and bottom-k. Requires the
// log to carry value blocks for every layer. Throws ContractError when
// fewer than top_k records qualify.
AttentionHistoryResult attention_history(const nn::Model& model, hist::HistoryReader& log,
                                         const std::vector<synthlang::TokenSequence>& sequences,
                                         const std::vector<ProbeInstance>& instances,
                                         const AttentionHistoryOptions& options);

}  // namespace innerloop::probes
