#pragma once

#include <optional>
#include <vector>

#include "innerloop/nn/any_model.hpp"
#include "innerloop/probes/probe_set.hpp"

namespace innerloop::probes {

struct InnerLossOptions {
  ProbeSelection selection;
  // Apply the model's final norm before W_LH. Off probes raw z^l.
  bool final_norm = true;
  // Drop instances whose last-layer loss exceeds this value.
  std::optional<double> filter_above;
};

struct InnerLossCurve {
  ProbeInstance instance;
  std::vector<double> loss;  // entry l is the loss of z^l, l = 0..L
};

struct InnerLossResult {
  std::vector<InnerLossCurve> curves;
  std::vector<double> mean;  // per layer, over kept curves
  std::size_t filtered = 0;
};

InnerLossResult inner_loss_curve(const nn::Model& model, const std::vector<synthlang::TokenSequence>& sequences,
                                 const InnerLossOptions& options = {});

// Same measurement on externally supplied representations: one
// (points x dim) matrix per sample, a target token per sample and a head
// matrix (vocab x dim) applied directly.
InnerLossResult inner_loss_external(const std::vector<nn::MatD>& samples, const std::vector<int>& targets,
                                    const nn::MatD& head, std::optional<double> filter_above = std::nullopt);

// Cross-entropy of softmax(logits) against `target`, via log-sum-exp.
double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits, int target);

}  // namespace innerloop::probes
