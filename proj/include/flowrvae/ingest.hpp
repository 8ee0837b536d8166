// SPDX-License-Identifier: Apache-2.0
/**
 * @file   ingest.hpp
 * @brief  CTU-13 style binetflow parsing and time-ordered dataset reading.
 *
 * A binetflow file is comma separated with a header row. Only the columns
 * listed in RequiredColumns are interpreted; sTos/dTos and any extra columns
 * are ignored. Ports stay strings because captures contain hex ports.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <map>
#include <vector>

namespace flowrvae {

/// Microseconds since the Unix epoch (UTC).
struct Timestamp {
  std::int64_t micros = 0;

  double seconds() const { return static_cast<double>(micros) * 1e-6; }
  static Timestamp from_seconds(double s);

  auto operator<=>(const Timestamp&) const = default;
};

/// Parses "%Y/%m/%d %H:%M:%S[.%f]". Throws DataError on malformed input.
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);
/// Exact "<seconds>.<micros>" text, e.g. "1313658000.250000".
std::string format_seconds(Timestamp ts);
Timestamp parse_seconds(std::string_view text);

enum class GroundTruth : std::uint8_t { Botnet = 0, Normal = 1, Background = 2 };

std::string_view to_string(GroundTruth g);
GroundTruth ground_truth_from_string(std::string_view s);

struct FlowRecord {
  Timestamp start_time;
  double duration = 0.0;
  std::string proto;
  std::string src_addr;
  std::string src_port;
  std::string direction;
  std::string dst_addr;
  std::string dst_port;
  std::string state;
  std::string service;
  std::uint64_t tot_pkts = 0;
  std::uint64_t tot_bytes = 0;
  std::uint64_t src_bytes = 0;
  std::string label_raw;

  bool operator==(const FlowRecord&) const = default;
};

/// Column positions of the fields we read, resolved from a header row.
struct CsvHeader {
  std::size_t n_columns = 0;
  std::size_t start_time, duration, proto, src_addr, src_port, direction,
      dst_addr, dst_port, state, tot_pkts, tot_bytes, src_bytes, label;

  /// Throws DataError naming the first missing column.
  static CsvHeader parse(std::string_view header_line);
  static const std::string& canonical_line();
};

/// Maps (proto, destination port) onto dns/smtp/ssl/http/other.
std::string derive_service(std::string_view proto, std::string_view dst_port);

/// Throws ParseError(line_no, ...) on a malformed row.
FlowRecord parse_flow_line(std::string_view line, const CsvHeader& header,
                           std::size_t line_no = 0);

/// Serializes using CsvHeader::canonical_line() column order.
std::string to_csv_line(const FlowRecord& flow);

GroundTruth label_of(const FlowRecord& flow);

struct ParseOptions {
  bool strict = false;
};

struct FileStats {
  std::string path;
  std::size_t records = 0;
  std::size_t errors = 0;
  bool resorted = false;
};

/// Pull interface over flows.
class FlowSource {
 public:
  virtual ~FlowSource() = default;
  virtual std::optional<FlowRecord> next() = 0;
};

/// Replays flows held in memory.
class VectorFlowSource : public FlowSource {
 public:
  explicit VectorFlowSource(std::vector<FlowRecord> flows) : flows_(std::move(flows)) {}
  std::optional<FlowRecord> next() override {
    if (pos_ == flows_.size()) return std::nullopt;
    return flows_[pos_++];
  }

 private:
  std::vector<FlowRecord> flows_;
  std::size_t pos_ = 0;
};

/// Lazily parses one CSV stream in file order (no reordering).
class CsvFlowSource : public FlowSource {
 public:
  CsvFlowSource(std::istream& in, ParseOptions opts, std::string name = "<stream>");

  std::optional<FlowRecord> next() override;
  const FileStats& stats() const { return stats_; }

 private:
  std::istream& in_;
  ParseOptions opts_;
  std::optional<CsvHeader> header_;
  std::size_t line_no_ = 0;
  FileStats stats_;
};

/// Merges several files into one non-decreasing start_time stream. Files
/// that are not already sorted are buffered and sorted before merging; ties
/// are broken by file order, then by position within the file.
class DatasetReader : public FlowSource {
 public:
  DatasetReader(std::vector<std::filesystem::path> paths, ParseOptions opts);
  ~DatasetReader() override;

  std::optional<FlowRecord> next() override;
  /// Complete only once the stream is exhausted.
  const std::vector<FileStats>& stats() const { return stats_; }

 private:
  struct Cursor;
  std::vector<std::unique_ptr<Cursor>> cursors_;
  std::vector<FileStats> stats_;
};

std::vector<FlowRecord> read_dataset(const std::vector<std::filesystem::path>& paths,
                                     ParseOptions opts,
                                     std::vector<FileStats>* stats = nullptr);

/// Scenario manifest: {"scenarios": {"<id>": ["file", ...], ...}} with
/// paths relative to the manifest's directory, optionally "train" and
/// "test" id lists. Returns the files of the requested ids in id order;
/// throws DataError on an unknown id.
struct ScenarioManifest {
  std::filesystem::path base_dir;
  std::map<std::string, std::vector<std::string>> scenarios;
  std::vector<std::string> train, test;

  static ScenarioManifest load(const std::filesystem::path& path);
  std::vector<std::filesystem::path> files(const std::vector<std::string>& ids) const;
};

}  // namespace flowrvae
