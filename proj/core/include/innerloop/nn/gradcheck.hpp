#pragma once

#include <string>
#include <vector>

#include "innerloop/nn/config.hpp"

namespace innerloop::nn {

struct GradCheckOptions {
  std::uint64_t seed = 7;
  // Central-difference step, 1e-5 when <= 0. Differences are taken in
  // double; a float model is compared against its weights widened.
  double epsilon = 0.0;
  // Relative error uses max(|analytic|, |numeric|, floor) as denominator.
  // Default floor: 1e-6 for f64, 1e-3 for f32.
  double floor = 0.0;
  // Train-mode forward with a mask pinned by reseeding the rng each call.
  bool with_dropout = false;
  // Check at most this many entries per array (0 = all), chosen evenly.
  std::size_t max_entries_per_group = 0;
  int sequence_length = 9;
};

struct GroupError {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GroupError> groups;
  double max_rel_error = 0.0;
  double epsilon = 0.0;
  double floor = 0.0;
};

// Compares backward() against central finite differences for every
// parameter array of a freshly initialized model.
GradCheckReport grad_check(const ModelConfig& config, const GradCheckOptions& options = {});

// 2 layers, 2 heads, d_model 16, d_ff 32, f64.
ModelConfig grad_check_config();

}  // namespace innerloop::nn
