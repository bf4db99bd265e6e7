#include "innerloop/probes/inner_loss.hpp"

#include <cmath>

#include "innerloop/error.hpp"

namespace innerloop::probes {

double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits, int target) {
  if (target < 0 || target >= logits.size()) throw ConfigError("target token outside the head's vocabulary");
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum()) - logits(target);
}

namespace {

void finish(InnerLossResult& r, std::optional<double> filter_above) {
  if (filter_above) {
    std::vector<InnerLossCurve> kept;
    for (auto& c : r.curves) {
      if (c.loss.back() > *filter_above)
        ++r.filtered;
      else
        kept.push_back(std::move(c));
    }
    r.curves = std::move(kept);
  }
  if (r.curves.empty()) throw ConfigError("no probe instances left for the inner loss");
  r.mean.assign(r.curves.front().loss.size(), 0.0);
  for (const auto& c : r.curves)
    for (std::size_t l = 0; l < c.loss.size(); ++l) r.mean[l] += c.loss[l];
  for (auto& m : r.mean) m /= static_cast<double>(r.curves.size());
}

}  // namespace

InnerLossResult inner_loss_curve(const nn::Model& model, const std::vector<synthlang::TokenSequence>& sequences,
                                 const InnerLossOptions& options) {
  const auto instances = select_instances(sequences, options.selection);
  if (instances.empty()) throw ConfigError("no probe instances selected for the inner loss");
  const auto reps = collect_representations(model, sequences, instances);
  InnerLossResult r;
  r.curves.resize(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    r.curves[i].instance = instances[i];
    r.curves[i].loss.resize(reps.z.size());
  }
  for (std::size_t l = 0; l < reps.z.size(); ++l) {
    const nn::MatD logits = model.head_logits(reps.z[l], options.final_norm);
    for (std::size_t i = 0; i < instances.size(); ++i)
      r.curves[i].loss[l] = cross_entropy(logits.row(static_cast<Eigen::Index>(i)).transpose(), instances[i].next_token);
  }
  finish(r, options.filter_above);
  return r;
}

InnerLossResult inner_loss_external(const std::vector<nn::MatD>& samples, const std::vector<int>& targets,
                                    const nn::MatD& head, std::optional<double> filter_above) {
  if (samples.empty()) throw ConfigError("no samples for the inner loss");
  if (samples.size() != targets.size()) throw ConfigError("one target per sample required");
  InnerLossResult r;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (samples[s].cols() != head.cols()) throw ConfigError("sample width does not match the head matrix");
    const nn::MatD logits = samples[s] * head.transpose();
    InnerLossCurve c;
    c.instance.sequence = static_cast<std::uint32_t>(s);
    c.instance.next_token = targets[s];
    for (Eigen::Index p = 0; p < logits.rows(); ++p) c.loss.push_back(cross_entropy(logits.row(p).transpose(), targets[s]));
    r.curves.push_back(std::move(c));
  }
  finish(r, filter_above);
  return r;
}

}  // namespace innerloop::probes
