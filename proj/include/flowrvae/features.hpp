// SPDX-License-Identifier: Apache-2.0
/**
 * @file   features.hpp
 * @brief  Host/time-window aggregation, [0,1] normalization and sequence
 *         assembly.
 *
 * Flows are bucketed into windows of T seconds measured from t0 (the first
 * flow of the run) and grouped by source address. Each group becomes one
 * HostWindowAggregate with a fixed 25-entry feature layout (see
 * feature_names()). Aggregates are normalized with min/max statistics from
 * the training split and assembled into chronologically sorted sequences
 * covering N windows.
 */
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowrvae/ingest.hpp"

namespace flowrvae {

inline constexpr std::size_t kNumProto = 4;
inline constexpr std::size_t kNumState = 6;
inline constexpr std::size_t kNumService = 5;
inline constexpr std::size_t kNumFeatures = 25;

/// tcp, udp, icmp, other.
std::size_t proto_category(std::string_view proto);
/// CON, INT, URP, RST, EST (flag pairs with an ACK and no reset), other.
std::size_t state_category(std::string_view state);
/// dns, smtp, ssl, http, other.
std::size_t service_category(std::string_view service);

/// Canonical ordered feature names; index i of every feature vector.
const std::vector<std::string>& feature_names();

struct HostWindowAggregate {
  std::string src_addr;
  std::int64_t window_index = 0;
  Timestamp first_seen;
  std::uint64_t n_connections = 0;
  std::uint64_t n_unique_dst_addrs = 0;
  std::uint64_t n_unique_dst_ports = 0;
  std::uint64_t n_unique_src_ports = 0;
  std::array<std::uint64_t, kNumProto> proto_counts{};
  std::array<std::uint64_t, kNumState> state_counts{};
  std::array<std::uint64_t, kNumService> service_counts{};
  std::uint64_t sum_bytes = 0;
  std::uint64_t sum_pkts = 0;
  double sum_dur = 0.0;
  GroundTruth label = GroundTruth::Background;

  /// Unnormalized values in feature_names() order.
  std::array<double, kNumFeatures> raw_features() const;
};

struct WindowSpec {
  Timestamp t0;
  double seconds = 60.0;
};

/// floor((t - t0) / T). Throws std::invalid_argument if t < t0 or T <= 0.
std::int64_t window_index(double t, double t0, double window_seconds);
std::int64_t window_index(Timestamp t, const WindowSpec& spec);

/// All flows must share src_addr and window. Throws on an empty group.
HostWindowAggregate aggregate_window(std::span<const FlowRecord> flows,
                                     const WindowSpec& spec);

/// Incremental aggregation over a time-ordered flow stream. Windows older
/// than the newest flow's window are closed and handed out by drain_closed();
/// flows older than the open window are rejected (add() returns false).
class WindowAggregator {
 public:
  explicit WindowAggregator(double window_seconds);

  /// The first accepted flow fixes t0 unless one was given.
  void set_t0(Timestamp t0);
  std::optional<Timestamp> t0() const { return t0_; }

  bool add(const FlowRecord& flow);
  /// Closes windows strictly before `window`.
  void close_before(std::int64_t window);
  void close_all();

  /// Closed aggregates in (window_index, first_seen, src_addr) order.
  std::vector<HostWindowAggregate> drain_closed();

  std::optional<std::int64_t> open_window() const { return open_window_; }
  std::size_t flows_accepted() const { return accepted_; }
  std::size_t flows_dropped() const { return dropped_; }
  double window_seconds() const { return seconds_; }

 private:
  struct Accumulator {
    HostWindowAggregate agg;
    std::unordered_set<std::string> dst_addrs, dst_ports, src_ports;
    bool any_botnet = false, any_normal = false;

    void add(const FlowRecord& f);
    HostWindowAggregate finish();
  };
  friend HostWindowAggregate aggregate_window(std::span<const FlowRecord>, const WindowSpec&);

  void flush_open();

  double seconds_;
  std::optional<Timestamp> t0_;
  std::optional<std::int64_t> open_window_;
  std::unordered_map<std::string, Accumulator> open_;
  std::vector<HostWindowAggregate> closed_;
  std::size_t accepted_ = 0;
  std::size_t dropped_ = 0;
};

/// Aggregates a whole time-ordered stream. t0 defaults to the first flow.
std::vector<HostWindowAggregate> aggregate_stream(FlowSource& source, double window_seconds,
                                                  Timestamp* t0_out = nullptr,
                                                  std::size_t* n_flows = nullptr);

using FeatureVector = std::vector<double>;

struct Normalizer {
  std::vector<std::string> names;
  std::vector<double> min;
  std::vector<double> max;
  std::vector<bool> log1p;

  std::size_t size() const { return names.size(); }

  /// Per-feature min/max. Throws std::invalid_argument on an empty input.
  static Normalizer fit(std::span<const std::array<double, kNumFeatures>> training,
                        bool use_log1p = false);

  /// Clamped to [0,1]; a constant feature (max == min) maps to 0.
  FeatureVector normalize(std::span<const double> raw) const;
  FeatureVector normalize(const HostWindowAggregate& agg) const;

  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& j);
  bool operator==(const Normalizer&) const = default;
};

/// One normalized host-window; an element of a Sequence and a row of a
/// features file.
struct FeatureRow {
  std::string src_addr;
  std::int64_t window_index = 0;
  Timestamp first_seen;
  GroundTruth label = GroundTruth::Background;
  FeatureVector features;

  bool operator==(const FeatureRow&) const = default;
};

struct Sequence {
  std::vector<FeatureRow> elements;
  std::int64_t span_start_window = 0;
  int n_windows = 1;
  /// When set, only elements of this window are reported by scoring
  /// (the rest are context).
  std::optional<std::int64_t> emit_window;

  std::size_t length() const { return elements.size(); }
  bool emits(const FeatureRow& e) const { return !emit_window || e.window_index == *emit_window; }
};

struct SequenceConfig {
  int n_windows = 3;
  std::size_t l_max = 128;
  int stride = 0;  // 0 means stride = n_windows
};

/// Non-overlapping (by default) spans of N windows, each sorted by
/// (first_seen, src_addr) and chunked to at most l_max elements.
/// `rows` must be sorted by window_index.
std::vector<Sequence> build_sequences(std::span<const FeatureRow> rows, const SequenceConfig& cfg);

/// For every window w holding rows: the sorted rows of windows [w-N+1, w],
/// chunked to l_max, with emit_window = w. Chunks that contain no row of w
/// are dropped. This is the construction the online detector can reproduce.
std::vector<Sequence> build_trailing_sequences(std::span<const FeatureRow> rows,
                                               const SequenceConfig& cfg);

/// Sorts by (first_seen, src_addr) and splits into chunks of <= l_max.
std::vector<std::vector<FeatureRow>> sort_and_chunk(std::vector<FeatureRow> rows,
                                                    std::size_t l_max);

// Features file --------------------------------------------------------------

inline constexpr int kFeaturesFormatVersion = 1;

struct FeatureFileHeader {
  int format_version = kFeaturesFormatVersion;
  std::vector<std::string> feature_names;
  Normalizer normalizer;
  double window_seconds = 60.0;
  int n_windows = 3;
  std::size_t l_max = 128;
  Timestamp t0;
  std::size_t n_flows = 0;

  nlohmann::json to_json() const;
  static FeatureFileHeader from_json(const nlohmann::json& j);
};

struct FeatureTable {
  FeatureFileHeader header;
  std::vector<FeatureRow> rows;  // sorted by (window_index, first_seen, src_addr)
};

enum class FeatureEncoding { Csv, Binary };

void write_features(const std::string& path, const FeatureTable& table, FeatureEncoding enc);
/// Detects the encoding from the leading bytes.
FeatureTable read_features(const std::string& path);

struct PreprocessConfig {
  double window_seconds = 60.0;
  int n_windows = 3;
  std::size_t l_max = 128;
  bool log1p = false;
};

/// Aggregates and normalizes a flow stream. With no `normalizer`, one is
/// fitted on this stream (the training split).
FeatureTable preprocess(FlowSource& source, const PreprocessConfig& cfg,
                        const std::optional<Normalizer>& normalizer = std::nullopt);

}  // namespace flowrvae
