// SPDX-License-Identifier: Apache-2.0
#include "flowrvae/features.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "flowrvae/errors.hpp"
#include "flowrvae/util.hpp"

namespace flowrvae {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

template <std::size_t N>
std::uint64_t distinct(const std::array<std::uint64_t, N>& counts) {
  return static_cast<std::uint64_t>(
      std::count_if(counts.begin(), counts.end(), [](std::uint64_t c) { return c > 0; }));
}

bool row_order(const FeatureRow& a, const FeatureRow& b) {
  if (a.first_seen != b.first_seen) return a.first_seen < b.first_seen;
  return a.src_addr < b.src_addr;
}

}  // namespace

std::size_t proto_category(std::string_view proto) {
  const auto p = lower(proto);
  if (p == "tcp") return 0;
  if (p == "udp") return 1;
  if (p == "icmp") return 2;
  return 3;
}

std::size_t state_category(std::string_view state) {
  if (state == "CON") return 0;
  if (state == "INT") return 1;
  if (state.starts_with("UR")) return 2;
  if (state == "RST") return 3;
  if (state.find('_') != std::string_view::npos) {
    if (state.find('R') != std::string_view::npos) return 3;
    if (state.find('A') != std::string_view::npos) return 4;
  }
  return 5;
}

std::size_t service_category(std::string_view service) {
  if (service == "dns") return 0;
  if (service == "smtp") return 1;
  if (service == "ssl") return 2;
  if (service == "http") return 3;
  return 4;
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {
      "n_connections",   "n_unique_dst_addrs", "n_unique_dst_ports", "n_unique_src_ports",
      "sum_bytes",       "sum_pkts",           "sum_dur",            "proto_tcp",
      "proto_udp",       "proto_icmp",         "proto_other",        "state_CON",
      "state_INT",       "state_URP",          "state_RST",          "state_EST",
      "state_other",     "service_dns",        "service_smtp",       "service_ssl",
      "service_http",    "service_other",      "n_distinct_proto",   "n_distinct_state",
      "n_distinct_service"};
  return names;
}

std::array<double, kNumFeatures> HostWindowAggregate::raw_features() const {
  std::array<double, kNumFeatures> f{};
  std::size_t i = 0;
  f[i++] = static_cast<double>(n_connections);
  f[i++] = static_cast<double>(n_unique_dst_addrs);
  f[i++] = static_cast<double>(n_unique_dst_ports);
  f[i++] = static_cast<double>(n_unique_src_ports);
  f[i++] = static_cast<double>(sum_bytes);
  f[i++] = static_cast<double>(sum_pkts);
  f[i++] = sum_dur;
  for (auto c : proto_counts) f[i++] = static_cast<double>(c);
  for (auto c : state_counts) f[i++] = static_cast<double>(c);
  for (auto c : service_counts) f[i++] = static_cast<double>(c);
  f[i++] = static_cast<double>(distinct(proto_counts));
  f[i++] = static_cast<double>(distinct(state_counts));
  f[i++] = static_cast<double>(distinct(service_counts));
  return f;
}

std::int64_t window_index(double t, double t0, double window_seconds) {
  if (!(window_seconds > 0.0)) throw std::invalid_argument("window duration must be positive");
  if (t < t0) throw std::invalid_argument("timestamp precedes stream start t0");
  return static_cast<std::int64_t>(std::floor((t - t0) / window_seconds));
}

std::int64_t window_index(Timestamp t, const WindowSpec& spec) {
  if (!(spec.seconds > 0.0)) throw std::invalid_argument("window duration must be positive");
  if (t < spec.t0) throw std::invalid_argument("timestamp precedes stream start t0");
  const double width_us = spec.seconds * 1e6;
  const auto width = static_cast<std::int64_t>(std::llround(width_us));
  const std::int64_t delta = t.micros - spec.t0.micros;
  if (width > 0 && static_cast<double>(width) == width_us) return delta / width;
  return static_cast<std::int64_t>(std::floor(static_cast<double>(delta) / width_us));
}

namespace {

bool aggregate_order(const HostWindowAggregate& a, const HostWindowAggregate& b) {
  if (a.window_index != b.window_index) return a.window_index < b.window_index;
  if (a.first_seen != b.first_seen) return a.first_seen < b.first_seen;
  return a.src_addr < b.src_addr;
}

}  // namespace

void WindowAggregator::Accumulator::add(const FlowRecord& f) {
  if (agg.n_connections == 0 || f.start_time < agg.first_seen) agg.first_seen = f.start_time;
  ++agg.n_connections;
  dst_addrs.insert(f.dst_addr);
  dst_ports.insert(f.dst_port);
  src_ports.insert(f.src_port);
  ++agg.proto_counts[proto_category(f.proto)];
  ++agg.state_counts[state_category(f.state)];
  ++agg.service_counts[service_category(f.service)];
  agg.sum_bytes += f.tot_bytes;
  agg.sum_pkts += f.tot_pkts;
  agg.sum_dur += f.duration;
  const auto g = label_of(f);
  any_botnet |= g == GroundTruth::Botnet;
  any_normal |= g == GroundTruth::Normal;
}

HostWindowAggregate WindowAggregator::Accumulator::finish() {
  agg.n_unique_dst_addrs = dst_addrs.size();
  agg.n_unique_dst_ports = dst_ports.size();
  agg.n_unique_src_ports = src_ports.size();
  agg.label = any_botnet   ? GroundTruth::Botnet
              : any_normal ? GroundTruth::Normal
                           : GroundTruth::Background;
  return std::move(agg);
}

HostWindowAggregate aggregate_window(std::span<const FlowRecord> flows, const WindowSpec& spec) {
  if (flows.empty()) throw std::invalid_argument("aggregate_window: empty flow group");
  WindowAggregator::Accumulator g;
  g.agg.src_addr = flows.front().src_addr;
  g.agg.window_index = window_index(flows.front().start_time, spec);
  for (const auto& f : flows) {
    if (f.src_addr != g.agg.src_addr) {
      throw std::invalid_argument("aggregate_window: mixed source addresses");
    }
    if (window_index(f.start_time, spec) != g.agg.window_index) {
      throw std::invalid_argument("aggregate_window: mixed windows");
    }
    g.add(f);
  }
  return g.finish();
}

WindowAggregator::WindowAggregator(double window_seconds) : seconds_(window_seconds) {
  if (!(window_seconds > 0.0)) throw std::invalid_argument("window duration must be positive");
}

void WindowAggregator::set_t0(Timestamp t0) { t0_ = t0; }

bool WindowAggregator::add(const FlowRecord& flow) {
  if (!t0_) t0_ = flow.start_time;
  if (flow.start_time < *t0_) {
    ++dropped_;
    return false;
  }
  const auto w = window_index(flow.start_time, WindowSpec{*t0_, seconds_});
  if (open_window_ && w < *open_window_) {
    ++dropped_;
    return false;
  }
  if (open_window_ && w > *open_window_) flush_open();
  open_window_ = w;
  auto [it, inserted] = open_.try_emplace(flow.src_addr);
  if (inserted) {
    it->second.agg.src_addr = flow.src_addr;
    it->second.agg.window_index = w;
  }
  it->second.add(flow);
  ++accepted_;
  return true;
}

void WindowAggregator::flush_open() {
  std::vector<HostWindowAggregate> batch;
  batch.reserve(open_.size());
  for (auto& [addr, acc] : open_) batch.push_back(acc.finish());
  open_.clear();
  std::sort(batch.begin(), batch.end(), aggregate_order);
  for (auto& a : batch) closed_.push_back(std::move(a));
}

void WindowAggregator::close_before(std::int64_t window) {
  if (open_window_ && *open_window_ < window) {
    flush_open();
    open_window_ = window;
  }
}

void WindowAggregator::close_all() { flush_open(); }

std::vector<HostWindowAggregate> WindowAggregator::drain_closed() {
  std::vector<HostWindowAggregate> out;
  out.swap(closed_);
  return out;
}

std::vector<HostWindowAggregate> aggregate_stream(FlowSource& source, double window_seconds,
                                                  Timestamp* t0_out, std::size_t* n_flows) {
  WindowAggregator agg(window_seconds);
  std::vector<HostWindowAggregate> out;
  while (auto flow = source.next()) {
    agg.add(*flow);
    for (auto& a : agg.drain_closed()) out.push_back(std::move(a));
  }
  agg.close_all();
  for (auto& a : agg.drain_closed()) out.push_back(std::move(a));
  if (t0_out) *t0_out = agg.t0().value_or(Timestamp{});
  if (n_flows) *n_flows = agg.flows_accepted();
  return out;
}

// Normalizer -----------------------------------------------------------------

Normalizer Normalizer::fit(std::span<const std::array<double, kNumFeatures>> training,
                           bool use_log1p) {
  if (training.empty()) throw std::invalid_argument("cannot fit normalizer on empty input");
  Normalizer nz;
  nz.names = feature_names();
  nz.log1p.assign(kNumFeatures, use_log1p);
  nz.min.assign(kNumFeatures, INFINITY);
  nz.max.assign(kNumFeatures, -INFINITY);
  for (const auto& row : training) {
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      const double v = use_log1p ? std::log1p(row[i]) : row[i];
      nz.min[i] = std::min(nz.min[i], v);
      nz.max[i] = std::max(nz.max[i], v);
    }
  }
  return nz;
}

FeatureVector Normalizer::normalize(std::span<const double> raw) const {
  if (raw.size() != size()) {
    throw std::invalid_argument("normalize: expected " + std::to_string(size()) +
                                " features, got " + std::to_string(raw.size()));
  }
  FeatureVector out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    double v = raw[i];
    if (log1p[i]) v = std::log1p(v);
    if (max[i] > min[i]) {
      out[i] = std::clamp((v - min[i]) / (max[i] - min[i]), 0.0, 1.0);
    } else {
      out[i] = 0.0;
    }
  }
  return out;
}

FeatureVector Normalizer::normalize(const HostWindowAggregate& agg) const {
  const auto raw = agg.raw_features();
  return normalize(std::span<const double>(raw));
}

nlohmann::json Normalizer::to_json() const {
  return {{"names", names}, {"min", min}, {"max", max}, {"log1p", log1p}};
}

Normalizer Normalizer::from_json(const nlohmann::json& j) {
  Normalizer nz;
  nz.names = j.at("names").get<std::vector<std::string>>();
  nz.min = j.at("min").get<std::vector<double>>();
  nz.max = j.at("max").get<std::vector<double>>();
  nz.log1p = j.at("log1p").get<std::vector<bool>>();
  if (nz.min.size() != nz.names.size() || nz.max.size() != nz.names.size() ||
      nz.log1p.size() != nz.names.size()) {
    throw DataError("normalizer arrays have inconsistent lengths");
  }
  return nz;
}

// Sequences ------------------------------------------------------------------

std::vector<std::vector<FeatureRow>> sort_and_chunk(std::vector<FeatureRow> rows,
                                                    std::size_t l_max) {
  if (l_max == 0) throw std::invalid_argument("l_max must be >= 1");
  std::stable_sort(rows.begin(), rows.end(), row_order);
  std::vector<std::vector<FeatureRow>> chunks;
  for (std::size_t i = 0; i < rows.size(); i += l_max) {
    const auto end = std::min(rows.size(), i + l_max);
    chunks.emplace_back(std::make_move_iterator(rows.begin() + static_cast<std::ptrdiff_t>(i)),
                        std::make_move_iterator(rows.begin() + static_cast<std::ptrdiff_t>(end)));
  }
  return chunks;
}

std::vector<Sequence> build_sequences(std::span<const FeatureRow> rows, const SequenceConfig& cfg) {
  if (cfg.n_windows < 1) throw std::invalid_argument("n_windows must be >= 1");
  const std::int64_t n = cfg.n_windows;
  const std::int64_t stride = cfg.stride > 0 ? cfg.stride : n;
  std::vector<Sequence> out;
  if (rows.empty()) return out;
  const std::int64_t last = rows.back().window_index;
  std::size_t lo = 0;
  for (std::int64_t start = 0; start <= last; start += stride) {
    while (lo < rows.size() && rows[lo].window_index < start) ++lo;
    std::vector<FeatureRow> span;
    for (std::size_t i = lo; i < rows.size() && rows[i].window_index < start + n; ++i) {
      span.push_back(rows[i]);
    }
    if (span.empty()) continue;
    for (auto& chunk : sort_and_chunk(std::move(span), cfg.l_max)) {
      Sequence s;
      s.elements = std::move(chunk);
      s.span_start_window = start;
      s.n_windows = cfg.n_windows;
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<Sequence> build_trailing_sequences(std::span<const FeatureRow> rows,
                                               const SequenceConfig& cfg) {
  if (cfg.n_windows < 1) throw std::invalid_argument("n_windows must be >= 1");
  const std::int64_t n = cfg.n_windows;
  std::vector<Sequence> out;
  std::size_t lo = 0;
  std::size_t i = 0;
  while (i < rows.size()) {
    const std::int64_t w = rows[i].window_index;
    std::size_t hi = i;
    while (hi < rows.size() && rows[hi].window_index == w) ++hi;
    while (rows[lo].window_index < w - n + 1) ++lo;
    std::vector<FeatureRow> span(rows.begin() + static_cast<std::ptrdiff_t>(lo),
                                 rows.begin() + static_cast<std::ptrdiff_t>(hi));
    for (auto& chunk : sort_and_chunk(std::move(span), cfg.l_max)) {
      const bool has_target = std::any_of(chunk.begin(), chunk.end(),
                                          [w](const FeatureRow& r) { return r.window_index == w; });
      if (!has_target) continue;
      Sequence s;
      s.elements = std::move(chunk);
      s.span_start_window = w - n + 1;
      s.n_windows = cfg.n_windows;
      s.emit_window = w;
      out.push_back(std::move(s));
    }
    i = hi;
  }
  return out;
}

// Features file --------------------------------------------------------------

nlohmann::json FeatureFileHeader::to_json() const {
  return {{"format_version", format_version},
          {"feature_names", feature_names},
          {"normalizer", normalizer.to_json()},
          {"T", window_seconds},
          {"N", n_windows},
          {"L_max", l_max},
          {"t0_us", t0.micros},
          {"t0", format_timestamp(t0)},
          {"n_flows", n_flows}};
}

FeatureFileHeader FeatureFileHeader::from_json(const nlohmann::json& j) {
  FeatureFileHeader h;
  h.format_version = j.at("format_version").get<int>();
  if (h.format_version != kFeaturesFormatVersion) {
    throw DataError("unsupported features format_version " + std::to_string(h.format_version));
  }
  h.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  h.normalizer = Normalizer::from_json(j.at("normalizer"));
  h.window_seconds = j.at("T").get<double>();
  h.n_windows = j.at("N").get<int>();
  h.l_max = j.at("L_max").get<std::size_t>();
  h.t0.micros = j.at("t0_us").get<std::int64_t>();
  h.n_flows = j.value("n_flows", std::size_t{0});
  return h;
}

namespace {

constexpr char kCsvMagic[] = "#flowrvae-features ";
constexpr char kBinMagic[4] = {'F', 'R', 'V', 'F'};

template <typename T>
void put_le(std::string& out, T v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw DataError("truncated binary features file");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(T);
  T v;
  std::memcpy(&v, &bits, sizeof(T));
  return v;
}

}  // namespace

void write_features(const std::string& path, const FeatureTable& table, FeatureEncoding enc) {
  const auto header = table.header.to_json().dump();
  std::string out;
  if (enc == FeatureEncoding::Csv) {
    out += kCsvMagic;
    out += header;
    out += "\nsrc_addr,window_index,first_seen,label";
    for (const auto& n : table.header.feature_names) out += "," + n;
    out += '\n';
    for (const auto& r : table.rows) {
      out += r.src_addr;
      out += ',' + std::to_string(r.window_index);
      out += ',' + format_seconds(r.first_seen);
      out += ',';
      out += to_string(r.label);
      for (double v : r.features) out += ',' + format_real(v);
      out += '\n';
    }
  } else {
    out.append(kBinMagic, 4);
    put_le<std::uint32_t>(out, kFeaturesFormatVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    put_le<std::uint64_t>(out, table.rows.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.header.feature_names.size()));
    for (const auto& r : table.rows) {
      put_le<std::uint16_t>(out, static_cast<std::uint16_t>(r.src_addr.size()));
      out += r.src_addr;
      put_le<std::int64_t>(out, r.window_index);
      put_le<std::int64_t>(out, r.first_seen.micros);
      out.push_back(static_cast<char>(r.label));
      for (double v : r.features) put_le<double>(out, v);
    }
  }
  write_text_file(path, out);
}

FeatureTable read_features(const std::string& path) {
  const auto data = read_text_file(path);
  FeatureTable table;
  if (data.size() >= 4 && std::memcmp(data.data(), kBinMagic, 4) == 0) {
    std::size_t pos = 4;
    const auto version = get_le<std::uint32_t>(data, pos);
    if (version != kFeaturesFormatVersion) {
      throw DataError("unsupported features format_version " + std::to_string(version));
    }
    const auto hlen = get_le<std::uint32_t>(data, pos);
    if (pos + hlen > data.size()) throw DataError("truncated binary features file");
    table.header = FeatureFileHeader::from_json(nlohmann::json::parse(data.substr(pos, hlen)));
    pos += hlen;
    const auto n_rows = get_le<std::uint64_t>(data, pos);
    const auto n_feat = get_le<std::uint32_t>(data, pos);
    if (n_feat != table.header.feature_names.size()) throw DataError("feature count mismatch");
    table.rows.reserve(n_rows);
    for (std::uint64_t k = 0; k < n_rows; ++k) {
      FeatureRow r;
      const auto len = get_le<std::uint16_t>(data, pos);
      if (pos + len > data.size()) throw DataError("truncated binary features file");
      r.src_addr = data.substr(pos, len);
      pos += len;
      r.window_index = get_le<std::int64_t>(data, pos);
      r.first_seen.micros = get_le<std::int64_t>(data, pos);
      const auto label = get_le<std::uint8_t>(data, pos);
      if (label > 2) throw DataError("bad label code in binary features file");
      r.label = static_cast<GroundTruth>(label);
      r.features.resize(n_feat);
      for (auto& v : r.features) v = get_le<double>(data, pos);
      table.rows.push_back(std::move(r));
    }
    return table;
  }
  if (!data.starts_with(kCsvMagic)) throw DataError("'" + path + "' is not a features file");
  std::istringstream in(data);
  std::string line;
  std::getline(in, line);
  table.header = FeatureFileHeader::from_json(
      nlohmann::json::parse(line.substr(sizeof(kCsvMagic) - 1)));
  std::getline(in, line);  // column names
  const std::size_t n_feat = table.header.feature_names.size();
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_eol(line).empty()) continue;
    const auto cols = split_csv(trim_eol(line));
    if (cols.size() != 4 + n_feat) throw ParseError(line_no, "wrong column count");
    FeatureRow r;
    try {
      r.src_addr = std::string(cols[0]);
      r.window_index = parse_int_field(cols[1], "window_index");
      r.first_seen = parse_seconds(cols[2]);
      r.label = ground_truth_from_string(cols[3]);
      r.features.resize(n_feat);
      for (std::size_t i = 0; i < n_feat; ++i) r.features[i] = parse_real_field(cols[4 + i], "feature");
    } catch (const ParseError&) {
      throw;
    } catch (const DataError& e) {
      throw ParseError(line_no, e.what());
    }
    table.rows.push_back(std::move(r));
  }
  return table;
}

FeatureTable preprocess(FlowSource& source, const PreprocessConfig& cfg,
                        const std::optional<Normalizer>& normalizer) {
  FeatureTable table;
  Timestamp t0;
  std::size_t n_flows = 0;
  const auto aggregates = aggregate_stream(source, cfg.window_seconds, &t0, &n_flows);
  if (normalizer) {
    if (normalizer->names != feature_names()) {
      throw DataError("normalizer feature layout does not match this build");
    }
    table.header.normalizer = *normalizer;
  } else {
    std::vector<std::array<double, kNumFeatures>> raw;
    raw.reserve(aggregates.size());
    for (const auto& a : aggregates) raw.push_back(a.raw_features());
    if (raw.empty()) throw DataError("no flows to fit the normalizer on");
    table.header.normalizer = Normalizer::fit(raw, cfg.log1p);
  }
  table.header.feature_names = feature_names();
  table.header.window_seconds = cfg.window_seconds;
  table.header.n_windows = cfg.n_windows;
  table.header.l_max = cfg.l_max;
  table.header.t0 = t0;
  table.header.n_flows = n_flows;
  table.rows.reserve(aggregates.size());
  for (const auto& a : aggregates) {
    table.rows.push_back(FeatureRow{a.src_addr, a.window_index, a.first_seen, a.label,
                                    table.header.normalizer.normalize(a)});
  }
  return table;
}

}  // namespace flowrvae
