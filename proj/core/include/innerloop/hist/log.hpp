#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "innerloop/hist/record.hpp"
#include "innerloop/nn/config.hpp"

namespace innerloop::hist {

// File layout: "HLOG" | u32 version | u32 len | header JSON
//   | u64 record count (patched on close; all-ones while open)
//   | frames of [u32 payload length | payload | u32 CRC32(payload)]
struct LogHeader {
  std::uint64_t config_hash = 0;
  nn::ModelConfig model;
  RecordLayout layout;
  nn::OptimizerKind optimizer = nn::OptimizerKind::kSgd;
  int stride = 1;  // epochs e with e % stride == 0 are recorded
  std::uint64_t record_count = 0;
  nlohmann::json extra = nlohmann::json::object();

  friend void to_json(nlohmann::json& j, const LogHeader& h);
  friend void from_json(const nlohmann::json& j, LogHeader& h);
};

class HistoryWriter {
 public:
  HistoryWriter(const std::string& path, LogHeader header);
  ~HistoryWriter();
  HistoryWriter(const HistoryWriter&) = delete;
  HistoryWriter& operator=(const HistoryWriter&) = delete;

  const LogHeader& header() const { return header_; }
  std::uint64_t count() const { return count_; }

  // Appends one framed record. Throws IoError; frames already written stay
  // readable.
  void append(const HistoryRecord& record);
  void flush();
  // Writes the final record count. Idempotent.
  void close();

 private:
  std::string path_;
  LogHeader header_;
  std::ofstream out_;
  std::streampos count_pos_;
  std::uint64_t count_ = 0;
  std::vector<std::uint8_t> buffer_;
  bool closed_ = false;
};

struct RecordFilter {
  std::optional<std::uint32_t> epoch_min;
  std::optional<std::uint32_t> epoch_max;  // inclusive
  std::optional<std::uint16_t> seed_label;
  std::optional<std::uint64_t> max_step;   // inclusive
};

class HistoryReader {
 public:
  explicit HistoryReader(const std::string& path);

  const LogHeader& header() const { return header_; }
  const RecordLayout& layout() const { return header_.layout; }
  const std::string& path() const { return path_; }

  // Restarts iteration at the first record.
  void rewind();
  // Reads the next record passing `filter`; false at end of data.
  bool next(HistoryRecord& out, const RecordFilter& filter = {});
  // Streams every matching record through `fn`. Returns the count visited.
  std::uint64_t for_each(const RecordFilter& filter, const std::function<void(const HistoryRecord&)>& fn);

  // True once iteration hit an incomplete or corrupt frame.
  bool truncated() const { return truncated_; }
  // Complete records read so far in this pass (before filtering).
  std::uint64_t records_read() const { return read_; }
  // Header count, or nullopt when the writer never closed the log.
  std::optional<std::uint64_t> declared_count() const;

 private:
  bool read_frame(HistoryRecord& out);

  std::string path_;
  LogHeader header_;
  std::ifstream in_;
  std::streampos data_pos_;
  std::vector<std::uint8_t> buffer_;
  std::uint64_t read_ = 0;
  bool truncated_ = false;
  bool done_ = false;
};

}  // namespace innerloop::hist
