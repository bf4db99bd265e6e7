#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "innerloop/nn/params.hpp"
#include "innerloop/probes/norms.hpp"

namespace innerloop::probes {

// Per-sample, per-layer representation dump.
// File: "XTRC" | u32 version | u32 n_samples | u32 points_per_sample
//   | u32 dim | f32 payload, sample-major then point-major.
struct Trace {
  std::uint32_t n_samples = 0;
  std::uint32_t points = 0;
  std::uint32_t dim = 0;
  std::vector<float> data;

  const float* point(std::uint32_t sample, std::uint32_t p) const {
    return data.data() + (static_cast<std::size_t>(sample) * points + p) * dim;
  }
  // points x dim matrix for one sample, widened to double.
  nn::MatD sample(std::uint32_t s) const;
  std::vector<NormTrajectory> norm_trajectories() const;
};

Trace read_xtrc(const std::string& path);
void write_xtrc(const Trace& trace, const std::string& path);

// Sibling label file: one u32 per sample, no header.
std::string labels_path(const std::string& xtrc_path);
std::optional<std::vector<std::uint32_t>> read_labels(const std::string& path, std::uint32_t expected);
void write_labels(const std::vector<std::uint32_t>& labels, const std::string& path);

// Head matrix: "MHEAD" | u32 vocab | u32 dim | f32 row-major.
nn::MatD read_mhead(const std::string& path);
void write_mhead(const nn::MatD& head, const std::string& path);

}  // namespace innerloop::probes
