#include "innerloop/probes/xtrc.hpp"

#include <cmath>
#include <filesystem>

#include "innerloop/error.hpp"
#include "innerloop/util/binary_io.hpp"

namespace innerloop::probes {

namespace {
constexpr std::uint32_t kXtrcVersion = 1;
}

nn::MatD Trace::sample(std::uint32_t s) const {
  if (s >= n_samples) throw ConfigError("trace sample " + std::to_string(s) + " out of range");
  nn::MatD m(points, dim);
  for (std::uint32_t p = 0; p < points; ++p) {
    const float* v = point(s, p);
    for (std::uint32_t j = 0; j < dim; ++j) m(p, j) = v[j];
  }
  return m;
}

std::vector<NormTrajectory> Trace::norm_trajectories() const {
  std::vector<NormTrajectory> out(n_samples);
  for (std::uint32_t s = 0; s < n_samples; ++s) {
    out[s].reserve(points);
    for (std::uint32_t p = 0; p < points; ++p) {
      const float* v = point(s, p);
      double sum = 0;
      for (std::uint32_t j = 0; j < dim; ++j) sum += static_cast<double>(v[j]) * v[j];
      out[s].push_back(std::sqrt(sum));
    }
  }
  return out;
}

Trace read_xtrc(const std::string& path) {
  const auto bytes = bin::read_file(path);
  bin::Reader r(bytes);
  Trace t;
  try {
    if (r.get_bytes(4) != "XTRC") throw FormatError(path + ": not an XTRC trace (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kXtrcVersion) throw FormatError(path + ": unsupported XTRC version " + std::to_string(version));
    t.n_samples = r.get<std::uint32_t>();
    t.points = r.get<std::uint32_t>();
    t.dim = r.get<std::uint32_t>();
  } catch (const FormatError& e) {
    throw FormatError(std::string(e.what()).find(path) == 0 ? e.what() : path + ": truncated XTRC header");
  }
  const std::size_t count = static_cast<std::size_t>(t.n_samples) * t.points * t.dim;
  if (r.remaining() != count * sizeof(float))
    throw FormatError(path + ": payload holds " + std::to_string(r.remaining()) + " bytes, shape " +
                      std::to_string(t.n_samples) + "x" + std::to_string(t.points) + "x" + std::to_string(t.dim) +
                      " needs " + std::to_string(count * sizeof(float)));
  t.data.resize(count);
  r.get_span(std::span<float>(t.data));
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isfinite(t.data[i])) {
      const auto per_sample = static_cast<std::size_t>(t.points) * t.dim;
      throw FormatError(path + ": non-finite value in sample " + std::to_string(i / per_sample) + ", point " +
                        std::to_string(i % per_sample / t.dim));
    }
  }
  return t;
}

void write_xtrc(const Trace& t, const std::string& path) {
  if (t.data.size() != static_cast<std::size_t>(t.n_samples) * t.points * t.dim)
    throw ConfigError("trace payload does not match its shape");
  bin::Writer w;
  w.put_bytes("XTRC");
  w.put(kXtrcVersion);
  w.put(t.n_samples);
  w.put(t.points);
  w.put(t.dim);
  w.put_span(std::span<const float>(t.data));
  bin::write_file(path, w.bytes());
}

std::string labels_path(const std::string& xtrc_path) {
  return std::filesystem::path(xtrc_path).replace_extension(".labels").string();
}

std::optional<std::vector<std::uint32_t>> read_labels(const std::string& path, std::uint32_t expected) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  const auto bytes = bin::read_file(path);
  if (bytes.size() != static_cast<std::size_t>(expected) * 4)
    throw FormatError(path + ": expected " + std::to_string(expected) + " labels, file holds " +
                      std::to_string(bytes.size()) + " bytes");
  std::vector<std::uint32_t> labels(expected);
  bin::Reader(bytes).get_span(std::span<std::uint32_t>(labels));
  return labels;
}

void write_labels(const std::vector<std::uint32_t>& labels, const std::string& path) {
  bin::Writer w;
  w.put_span(std::span<const std::uint32_t>(labels));
  bin::write_file(path, w.bytes());
}

nn::MatD read_mhead(const std::string& path) {
  const auto bytes = bin::read_file(path);
  bin::Reader r(bytes);
  if (bytes.size() < 13 || r.get_bytes(5) != "MHEAD") throw FormatError(path + ": not an MHEAD matrix (bad magic)");
  const auto vocab = r.get<std::uint32_t>();
  const auto dim = r.get<std::uint32_t>();
  if (r.remaining() != static_cast<std::size_t>(vocab) * dim * 4)
    throw FormatError(path + ": payload does not match shape " + std::to_string(vocab) + "x" + std::to_string(dim));
  std::vector<float> v(static_cast<std::size_t>(vocab) * dim);
  r.get_span(std::span<float>(v));
  nn::MatD m(vocab, dim);
  for (std::uint32_t i = 0; i < vocab; ++i)
    for (std::uint32_t j = 0; j < dim; ++j) m(i, j) = v[static_cast<std::size_t>(i) * dim + j];
  if (!m.allFinite()) throw FormatError(path + ": non-finite head matrix");
  return m;
}

void write_mhead(const nn::MatD& head, const std::string& path) {
  bin::Writer w;
  w.put_bytes("MHEAD");
  w.put(static_cast<std::uint32_t>(head.rows()));
  w.put(static_cast<std::uint32_t>(head.cols()));
  for (Eigen::Index i = 0; i < head.rows(); ++i)
    for (Eigen::Index j = 0; j < head.cols(); ++j) w.put(static_cast<float>(head(i, j)));
  bin::write_file(path, w.bytes());
}

}  // namespace innerloop::probes
