#include "innerloop/hist/log.hpp"

#include <algorithm>
#include <cstring>

#include "innerloop/error.hpp"
#include "innerloop/util/binary_io.hpp"

namespace innerloop::hist {

namespace {
constexpr char kMagic[4] = {'H', 'L', 'O', 'G'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kOpenCount = ~std::uint64_t{0};
constexpr std::size_t kFixedBytes = 8 + 4 + 4 + 2 + 2 + 2 + 2;
}  // namespace

RecordLayout RecordLayout::for_model(const nn::ModelConfig& c, std::vector<int> value_layers,
                                     std::vector<int> grad_layers) {
  auto check = [&](std::vector<int>& v, const char* what) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    for (int l : v) {
      if (l < 1 || l > c.n_layers)
        throw ConfigError(std::string(what) + " layer " + std::to_string(l) + " outside [1, " +
                          std::to_string(c.n_layers) + "]");
    }
  };
  check(value_layers, "value");
  check(grad_layers, "gradient");
  RecordLayout l;
  l.d_model = c.d_model;
  l.d_ff = c.d_ff;
  l.d_head = c.d_head();
  l.n_layers = c.n_layers;
  l.n_heads = c.n_heads;
  l.vocab = c.vocab;
  l.value_layers = std::move(value_layers);
  l.grad_layers = std::move(grad_layers);
  l.precision = c.precision;
  return l;
}

std::size_t RecordLayout::value_count() const {
  return 1 + static_cast<std::size_t>(d_model + vocab) + value_layers.size() * static_cast<std::size_t>(d_model + d_ff) +
         grad_layers.size() * 2 * static_cast<std::size_t>(d_model);
}

std::size_t RecordLayout::payload_bytes() const {
  return kFixedBytes + value_count() * (precision == nn::Precision::kF32 ? 4 : 8);
}

namespace {
std::ptrdiff_t index_of(const std::vector<int>& v, int layer) {
  const auto it = std::find(v.begin(), v.end(), layer);
  return it == v.end() ? -1 : it - v.begin();
}
}  // namespace

std::ptrdiff_t RecordLayout::attn_value_offset(int layer) const {
  const auto i = index_of(value_layers, layer);
  return i < 0 ? -1 : 1 + d_model + vocab + i * d_model;
}

std::ptrdiff_t RecordLayout::ffn_act_offset(int layer) const {
  const auto i = index_of(value_layers, layer);
  const auto base = 1 + d_model + vocab + static_cast<std::ptrdiff_t>(value_layers.size()) * d_model;
  return i < 0 ? -1 : base + i * d_ff;
}

std::ptrdiff_t RecordLayout::d_attn_out_offset(int layer) const {
  const auto i = index_of(grad_layers, layer);
  const auto base = 1 + d_model + vocab + static_cast<std::ptrdiff_t>(value_layers.size()) * (d_model + d_ff);
  return i < 0 ? -1 : base + i * 2 * d_model;
}

std::ptrdiff_t RecordLayout::d_ffn_out_offset(int layer) const {
  const auto o = d_attn_out_offset(layer);
  return o < 0 ? -1 : o + d_model;
}

void to_json(nlohmann::json& j, const RecordLayout& l) {
  j = nlohmann::json{{"d_model", l.d_model},   {"d_ff", l.d_ff},
                     {"d_head", l.d_head},     {"n_layers", l.n_layers},
                     {"n_heads", l.n_heads},   {"vocab", l.vocab},
                     {"value_layers", l.value_layers}, {"grad_layers", l.grad_layers},
                     {"precision", nn::to_string(l.precision)}};
}

void from_json(const nlohmann::json& j, RecordLayout& l) {
  l.d_model = j.at("d_model").get<int>();
  l.d_ff = j.at("d_ff").get<int>();
  l.d_head = j.at("d_head").get<int>();
  l.n_layers = j.at("n_layers").get<int>();
  l.n_heads = j.at("n_heads").get<int>();
  l.vocab = j.at("vocab").get<int>();
  l.value_layers = j.at("value_layers").get<std::vector<int>>();
  l.grad_layers = j.at("grad_layers").get<std::vector<int>>();
  const auto p = j.at("precision").get<std::string>();
  if (p != "f32" && p != "f64") throw FormatError("unknown record precision " + p);
  l.precision = p == "f32" ? nn::Precision::kF32 : nn::Precision::kF64;
}

HistoryRecord::ConstMap HistoryRecord::block(std::ptrdiff_t offset, int size) const {
  if (offset < 0) throw ContractError("history block not recorded");
  return ConstMap(values.data() + offset, size);
}

HistoryRecord::ConstMap HistoryRecord::attn_value(const RecordLayout& l, int layer, int head) const {
  const auto off = l.attn_value_offset(layer);
  if (off < 0) throw ContractError("attention values of layer " + std::to_string(layer) + " not recorded");
  if (head < 0) return block(off, l.d_model);
  if (head >= l.n_heads) throw ConfigError("head " + std::to_string(head) + " out of range");
  return block(off + static_cast<std::ptrdiff_t>(head) * l.d_head, l.d_head);
}

HistoryRecord::ConstMap HistoryRecord::ffn_act(const RecordLayout& l, int layer) const {
  const auto off = l.ffn_act_offset(layer);
  if (off < 0) throw ContractError("FFN activations of layer " + std::to_string(layer) + " not recorded");
  return block(off, l.d_ff);
}

HistoryRecord::ConstMap HistoryRecord::d_attn_out(const RecordLayout& l, int layer) const {
  const auto off = l.d_attn_out_offset(layer);
  if (off < 0) throw ContractError("MHSA output gradients of layer " + std::to_string(layer) + " not recorded");
  return block(off, l.d_model);
}

HistoryRecord::ConstMap HistoryRecord::d_ffn_out(const RecordLayout& l, int layer) const {
  const auto off = l.d_ffn_out_offset(layer);
  if (off < 0) throw ContractError("FFN output gradients of layer " + std::to_string(layer) + " not recorded");
  return block(off, l.d_model);
}

void to_json(nlohmann::json& j, const LogHeader& h) {
  j = nlohmann::json{{"config_hash", h.config_hash}, {"model", h.model},
                     {"layout", h.layout},           {"optimizer", nn::to_string(h.optimizer)},
                     {"stride", h.stride},           {"extra", h.extra}};
}

void from_json(const nlohmann::json& j, LogHeader& h) {
  h.config_hash = j.at("config_hash").get<std::uint64_t>();
  h.model = j.at("model").get<nn::ModelConfig>();
  h.layout = j.at("layout").get<RecordLayout>();
  const auto opt = j.at("optimizer").get<std::string>();
  h.optimizer = opt == "adamw" ? nn::OptimizerKind::kAdamW : nn::OptimizerKind::kSgd;
  h.stride = j.at("stride").get<int>();
  h.extra = j.value("extra", nlohmann::json::object());
}

HistoryWriter::HistoryWriter(const std::string& path, LogHeader header) : path_(path), header_(std::move(header)) {
  if (header_.stride < 1) throw ConfigError("history stride must be >= 1");
  header_.config_hash = header_.model.hash();
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open history log for writing: " + path);
  bin::Writer w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put(kVersion);
  w.put_string(nlohmann::json(header_).dump());
  out_.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  count_pos_ = out_.tellp();
  const std::uint64_t open_count = kOpenCount;
  out_.write(reinterpret_cast<const char*>(&open_count), 8);
  if (!out_) throw IoError("cannot write history header: " + path);
}

HistoryWriter::~HistoryWriter() {
  try {
    close();
  } catch (...) {
  }
}

void HistoryWriter::append(const HistoryRecord& r) {
  if (closed_) throw IoError("history log already closed: " + path_);
  const auto& layout = header_.layout;
  if (r.values.size() != layout.value_count())
    throw ConfigError("history record has " + std::to_string(r.values.size()) + " values, layout expects " +
                      std::to_string(layout.value_count()));
  bin::Writer w;
  w.bytes().reserve(layout.payload_bytes() + 8);
  w.put(static_cast<std::uint32_t>(layout.payload_bytes()));
  w.put(r.step);
  w.put(r.epoch);
  w.put(r.sequence_id);
  w.put(r.position);
  w.put(r.seed_label);
  w.put(r.next_token);
  w.put(std::uint16_t{0});
  if (layout.precision == nn::Precision::kF64) {
    w.put_span(std::span<const double>(r.values));
  } else {
    for (double v : r.values) w.put(static_cast<float>(v));
  }
  const auto payload = std::span<const std::uint8_t>(w.bytes()).subspan(4);
  w.put(bin::crc32(payload));
  out_.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  if (!out_) throw IoError("write to history log failed: " + path_);
  ++count_;
}

void HistoryWriter::flush() {
  out_.flush();
  if (!out_) throw IoError("flush of history log failed: " + path_);
}

void HistoryWriter::close() {
  if (closed_) return;
  closed_ = true;
  out_.flush();
  out_.seekp(count_pos_);
  out_.write(reinterpret_cast<const char*>(&count_), 8);
  out_.close();
  if (!out_) throw IoError("cannot finalize history log: " + path_);
}

HistoryReader::HistoryReader(const std::string& path) : path_(path) {
  in_.open(path, std::ios::binary);
  if (!in_) throw IoError("cannot open history log: " + path);
  char magic[4] = {};
  std::uint32_t version = 0, len = 0;
  in_.read(magic, 4);
  in_.read(reinterpret_cast<char*>(&version), 4);
  in_.read(reinterpret_cast<char*>(&len), 4);
  if (!in_ || std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path + ": not a history log (bad magic)");
  if (version != kVersion) throw FormatError(path + ": unsupported history log version " + std::to_string(version));
  std::string json(len, '\0');
  in_.read(json.data(), len);
  in_.read(reinterpret_cast<char*>(&header_.record_count), 8);
  if (!in_) throw FormatError(path + ": truncated history header");
  try {
    const auto count = header_.record_count;
    header_ = nlohmann::json::parse(json).get<LogHeader>();
    header_.record_count = count;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad history header (" + e.what() + ")");
  }
  if (header_.config_hash != header_.model.hash())
    throw FormatError(path + ": header config hash does not match its model config");
  data_pos_ = in_.tellg();
}

std::optional<std::uint64_t> HistoryReader::declared_count() const {
  if (header_.record_count == kOpenCount) return std::nullopt;
  return header_.record_count;
}

void HistoryReader::rewind() {
  in_.clear();
  in_.seekg(data_pos_);
  read_ = 0;
  done_ = false;
}

bool HistoryReader::read_frame(HistoryRecord& out) {
  if (done_) return false;
  std::uint32_t len = 0;
  in_.read(reinterpret_cast<char*>(&len), 4);
  if (in_.gcount() == 0 && in_.eof()) {
    done_ = true;
    return false;
  }
  const auto& layout = header_.layout;
  if (!in_ || len != layout.payload_bytes()) {
    truncated_ = true;
    done_ = true;
    return false;
  }
  buffer_.resize(len + 4);
  in_.read(reinterpret_cast<char*>(buffer_.data()), static_cast<std::streamsize>(buffer_.size()));
  if (!in_) {
    truncated_ = true;
    done_ = true;
    return false;
  }
  std::uint32_t crc = 0;
  std::memcpy(&crc, buffer_.data() + len, 4);
  const auto payload = std::span<const std::uint8_t>(buffer_.data(), len);
  if (bin::crc32(payload) != crc) {
    truncated_ = true;
    done_ = true;
    return false;
  }
  bin::Reader r(payload);
  out.step = r.get<std::uint64_t>();
  out.epoch = r.get<std::uint32_t>();
  out.sequence_id = r.get<std::uint32_t>();
  out.position = r.get<std::uint16_t>();
  out.seed_label = r.get<std::uint16_t>();
  out.next_token = r.get<std::uint16_t>();
  r.get<std::uint16_t>();
  out.values.resize(layout.value_count());
  if (layout.precision == nn::Precision::kF64) {
    r.get_span(std::span<double>(out.values));
  } else {
    const float* src = reinterpret_cast<const float*>(payload.data() + r.position());
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      float f;
      std::memcpy(&f, src + i, 4);
      out.values[i] = f;
    }
  }
  ++read_;
  return true;
}

bool HistoryReader::next(HistoryRecord& out, const RecordFilter& f) {
  while (read_frame(out)) {
    // Records are written in step order, so upper bounds end the scan.
    if (f.max_step && out.step > *f.max_step) {
      done_ = true;
      return false;
    }
    if (f.epoch_max && out.epoch > *f.epoch_max) {
      done_ = true;
      return false;
    }
    if (f.epoch_min && out.epoch < *f.epoch_min) continue;
    if (f.seed_label && out.seed_label != *f.seed_label) continue;
    return true;
  }
  return false;
}

std::uint64_t HistoryReader::for_each(const RecordFilter& filter, const std::function<void(const HistoryRecord&)>& fn) {
  rewind();
  HistoryRecord rec;
  std::uint64_t n = 0;
  while (next(rec, filter)) {
    fn(rec);
    ++n;
  }
  return n;
}

}  // namespace innerloop::hist
