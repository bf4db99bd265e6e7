#pragma once

#include <optional>
#include <string>
#include <vector>

#include "innerloop/probes/attention_history.hpp"
#include "innerloop/probes/inner_loss.hpp"
#include "innerloop/probes/linalg.hpp"
#include "innerloop/probes/norms.hpp"
#include "innerloop/probes/probe_set.hpp"
#include "innerloop/probes/report.hpp"
#include "innerloop/probes/xtrc.hpp"
#include "innerloop/run/experiment.hpp"

namespace innerloop::run {

// Common selection of checkpoints and splits. Empty epochs = every
// checkpoint of the run.
struct AnalysisScope {
  std::vector<int> epochs;
  std::vector<std::string> splits{"validation"};
  int threads = 1;
};

std::vector<int> resolve_epochs(const Run& run, const std::vector<int>& requested);

struct ClusterOptions {
  AnalysisScope scope;
  std::vector<probes::GroundTruthKind> truths{probes::GroundTruthKind::kSeed, probes::GroundTruthKind::kNextToken,
                                              probes::GroundTruthKind::kCombination};
  bool final_norm = false;
  std::uint64_t rng_seed = 0;
};
// Rows: (epoch, layer, split, ground truth, f1|ari|ami|k).
probes::Report cluster_report(const Run& run, const ClusterOptions& options);

struct InnerLossReportOptions {
  AnalysisScope scope;
  probes::InnerLossOptions probe;
};
// Rows: (epoch, layer, split, "-", mean_loss) plus kept/filtered counts at layer -1.
probes::Report inner_loss_report(const Run& run, const InnerLossReportOptions& options);

struct AttentionReportOptions {
  AnalysisScope scope;
  int top_k = 10;
};
// Rows: (epoch, layer, split, seed|combination, <module>_top|<module>_bottom).
// Epoch 0 is skipped: no history precedes it.
probes::Report attention_report(const Run& run, const AttentionReportOptions& options);

struct NormReportOptions {
  AnalysisScope scope;
  bool exclude_last = false;
  probes::ProbeSelection selection{probes::PositionPolicy::kAll, 5};
};
// Rows: (epoch, -1, split, "-", pair_level|sequence_level|pairs|trajectories).
probes::Report norm_report(const Run& run, const NormReportOptions& options);

struct PcaReportOptions {
  AnalysisScope scope;
  probes::ProbeSelection selection{probes::PositionPolicy::kLastToken, 5};
  std::size_t max_trajectories = 50;
};
// Fits PCA on every layer representation of the probed tokens and emits
// per-trajectory coordinates: (epoch, layer, split, "traj<i>", pc1|pc2|pc3|norm)
// plus explained-variance rows at layer -1.
probes::Report pca_report(const Run& run, const PcaReportOptions& options);

struct EigenReportOptions {
  AnalysisScope scope;
  std::size_t contexts = 100;
};
// Rows: (epoch, layer, split, "-", consistent|norm_nondec|condition_holds|contexts).
probes::Report eigen_report(const Run& run, const EigenReportOptions& options);

struct DualityResult {
  std::string weight;
  double max_abs_diff = 0.0;
};
// Reconstructs W_LH, W_O of the first gradient layer (full and per head) and
// W_2 of that layer from the history log and compares with the checkpoint.
std::vector<DualityResult> verify_duality(const Run& run, std::optional<int> epoch = std::nullopt);

struct DualHeadResult {
  std::size_t queries = 0;
  double max_abs_diff = 0.0;
  double argmax_agreement = 0.0;  // percent
  bool zero_init = false;
};
DualHeadResult verify_dual_head(const Run& run, std::size_t queries = 100, std::optional<int> epoch = std::nullopt);

// Norm statistics (and, given a head matrix and labels, inner losses) of an
// imported trace.
probes::Report trace_report(const probes::Trace& trace, bool exclude_last, const std::optional<nn::MatD>& head,
                            const std::optional<std::vector<std::uint32_t>>& labels,
                            std::optional<double> filter_loss);

// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace innerloop::run
