#include "innerloop/nn/checkpoint.hpp"

#include <cstring>

#include "innerloop/error.hpp"
#include "innerloop/util/binary_io.hpp"

namespace innerloop::nn {

namespace {

constexpr char kMagic[4] = {'M', 'L', 'N', 'S'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_arrays(bin::Writer& w, const Params<T>& p) {
  p.visit([&](std::string_view, const Mat<T>& m) {
    w.put(static_cast<std::uint32_t>(m.rows()));
    w.put(static_cast<std::uint32_t>(m.cols()));
    w.put_span(std::span<const T>(m.data(), static_cast<std::size_t>(m.size())));
  });
}

template <class T>
void read_arrays(bin::Reader& r, Params<T>& p) {
  p.visit([&](std::string_view name, Mat<T>& m) {
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (rows != m.rows() || cols != m.cols())
      throw FormatError("checkpoint array " + std::string(name) + " has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", expected " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
    r.get_span(std::span<T>(m.data(), static_cast<std::size_t>(m.size())));
  });
}

struct Header {
  ModelConfig config;
  std::size_t body_offset = 0;
};

// Validates magic, version and CRC; returns the decoded configuration.
Header read_header(std::span<const std::uint8_t> bytes, const std::string& path) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(path + ": not a checkpoint (bad magic)");
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (bin::crc32(body) != stored) throw FormatError(path + ": checkpoint CRC mismatch (truncated or corrupt)");
  bin::Reader r(body);
  r.get_bytes(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  Header h;
  try {
    h.config = nlohmann::json::parse(r.get_string()).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad config block (" + e.what() + ")");
  }
  h.body_offset = r.position();
  return h;
}

template <class T>
ModelState<T> decode(std::span<const std::uint8_t> bytes, const Header& h) {
  bin::Reader r(bytes.first(bytes.size() - 4));
  r.get_bytes(h.body_offset);
  ModelState<T> s;
  s.config = h.config;
  s.params = Params<T>::zeros(h.config);
  s.epoch = static_cast<int>(r.get<std::uint32_t>());
  s.token_step = r.get<std::uint64_t>();
  const bool has_adam = r.get<std::uint8_t>() != 0;
  const auto adam_step = r.get<std::uint64_t>();
  read_arrays(r, s.params);
  if (has_adam) {
    AdamState<T> a{Params<T>::zeros(h.config), Params<T>::zeros(h.config), adam_step};
    read_arrays(r, a.m);
    read_arrays(r, a.v);
    s.adam = std::move(a);
  }
  if (r.remaining() != 0) throw FormatError("checkpoint has trailing bytes");
  return s;
}

template <class T>
constexpr Precision precision_of() {
  return std::is_same_v<T, float> ? Precision::kF32 : Precision::kF64;
}

}  // namespace

template <class T>
void save_checkpoint(const ModelState<T>& state, const std::string& path) {
  if (state.config.precision != precision_of<T>())
    throw ConfigError("model precision does not match its configuration");
  bin::Writer w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put(kVersion);
  w.put_string(nlohmann::json(state.config).dump());
  w.put(static_cast<std::uint32_t>(state.epoch));
  w.put(state.token_step);
  w.put(static_cast<std::uint8_t>(state.adam ? 1 : 0));
  w.put(static_cast<std::uint64_t>(state.adam ? state.adam->step : 0));
  write_arrays(w, state.params);
  if (state.adam) {
    write_arrays(w, state.adam->m);
    write_arrays(w, state.adam->v);
  }
  const auto crc = bin::crc32(w.bytes());
  w.put(crc);
  // Write to a sibling then rename so a crash never leaves a partial file.
  const std::string tmp = path + ".tmp";
  bin::write_file(tmp, w.bytes());
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot rename checkpoint into place: " + path);
}

template <class T>
ModelState<T> load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected) {
  const auto bytes = bin::read_file(path);
  const auto h = read_header(bytes, path);
  if (expected && !(h.config == *expected))
    throw FormatError(path + ": checkpoint configuration differs: " + h.config.diff(*expected));
  if (h.config.precision != precision_of<T>())
    throw FormatError(path + ": checkpoint precision is " + to_string(h.config.precision));
  return decode<T>(bytes, h);
}

AnyState load_any_checkpoint(const std::string& path) {
  const auto bytes = bin::read_file(path);
  const auto h = read_header(bytes, path);
  if (h.config.precision == Precision::kF32) return decode<float>(bytes, h);
  return decode<double>(bytes, h);
}

ModelConfig read_checkpoint_config(const std::string& path) { return read_header(bin::read_file(path), path).config; }

template void save_checkpoint(const ModelState<float>&, const std::string&);
template void save_checkpoint(const ModelState<double>&, const std::string&);
template ModelState<float> load_checkpoint(const std::string&, const std::optional<ModelConfig>&);
template ModelState<double> load_checkpoint(const std::string&, const std::optional<ModelConfig>&);

}  // namespace innerloop::nn
