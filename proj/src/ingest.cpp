// SPDX-License-Identifier: Apache-2.0
#include "flowrvae/ingest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>

#include "flowrvae/errors.hpp"
#include "flowrvae/util.hpp"

#include <nlohmann/json.hpp>

namespace flowrvae {

namespace {

// Howard Hinnant's days_from_civil.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

template <typename T>
bool parse_int(std::string_view s, T& out) {
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

bool parse_real(std::string_view s, double& out) {
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end && std::isfinite(out);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::optional<long> port_number(std::string_view port) {
  long value = 0;
  if (port.size() > 2 && port[0] == '0' && (port[1] == 'x' || port[1] == 'X')) {
    const auto* end = port.data() + port.size();
    auto [ptr, ec] = std::from_chars(port.data() + 2, end, value, 16);
    if (ec == std::errc{} && ptr == end) return value;
    return std::nullopt;
  }
  if (parse_int(port, value)) return value;
  return std::nullopt;
}

}  // namespace

Timestamp Timestamp::from_seconds(double s) {
  return Timestamp{static_cast<std::int64_t>(std::llround(s * 1e6))};
}

Timestamp parse_timestamp(std::string_view text) {
  // YYYY/MM/DD HH:MM:SS[.ffffff]
  if (text.size() < 19 || text[4] != '/' || text[7] != '/' || text[10] != ' ' ||
      text[13] != ':' || text[16] != ':') {
    throw DataError("malformed timestamp '" + std::string(text) + "'");
  }
  int year = 0;
  unsigned month = 0, day = 0, hour = 0, minute = 0, second = 0;
  if (!parse_int(text.substr(0, 4), year) || !parse_int(text.substr(5, 2), month) ||
      !parse_int(text.substr(8, 2), day) || !parse_int(text.substr(11, 2), hour) ||
      !parse_int(text.substr(14, 2), minute) || !parse_int(text.substr(17, 2), second) ||
      month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 ||
      second > 60) {
    throw DataError("malformed timestamp '" + std::string(text) + "'");
  }
  std::int64_t micros = 0;
  if (text.size() > 19) {
    if (text[19] != '.' || text.size() == 20) {
      throw DataError("malformed timestamp '" + std::string(text) + "'");
    }
    const auto frac = text.substr(20);
    std::int64_t scale = 100000;
    for (char c : frac) {
      if (c < '0' || c > '9') throw DataError("malformed timestamp '" + std::string(text) + "'");
      // digits past microsecond precision are truncated
      micros += (c - '0') * scale;
      scale /= 10;
    }
  }
  const std::int64_t days = days_from_civil(year, month, day);
  const std::int64_t secs = days * 86400 + hour * 3600 + minute * 60 + second;
  return Timestamp{secs * 1000000 + micros};
}

std::string format_seconds(Timestamp ts) {
  std::int64_t s = ts.micros / 1000000;
  std::int64_t us = ts.micros % 1000000;
  if (us < 0) {
    us += 1000000;
    s -= 1;
  }
  char buf[48];
  std::snprintf(buf, sizeof buf, "%lld.%06lld", static_cast<long long>(s),
                static_cast<long long>(us));
  return buf;
}

Timestamp parse_seconds(std::string_view s) {
  const auto dot = s.find('.');
  if (dot == std::string_view::npos) return Timestamp{parse_int_field(s, "timestamp") * 1000000};
  const auto whole = parse_int_field(s.substr(0, dot), "timestamp");
  auto frac = std::string(s.substr(dot + 1));
  if (frac.empty() || frac.size() > 6) throw DataError("bad timestamp '" + std::string(s) + "'");
  frac.resize(6, '0');
  const auto us = parse_int_field(frac, "timestamp");
  return Timestamp{whole * 1000000 + us};
}

std::string format_timestamp(Timestamp ts) {
  std::int64_t secs = ts.micros / 1000000;
  std::int64_t micros = ts.micros % 1000000;
  if (micros < 0) {
    micros += 1000000;
    secs -= 1;
  }
  std::int64_t days = secs / 86400;
  std::int64_t rem = secs % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  std::int64_t y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04lld/%02u/%02u %02lld:%02lld:%02lld.%06lld",
                static_cast<long long>(y), m, d, static_cast<long long>(rem / 3600),
                static_cast<long long>(rem % 3600 / 60), static_cast<long long>(rem % 60),
                static_cast<long long>(micros));
  return buf;
}

std::string_view to_string(GroundTruth g) {
  switch (g) {
    case GroundTruth::Botnet: return "Botnet";
    case GroundTruth::Normal: return "Normal";
    case GroundTruth::Background: return "Background";
  }
  return "Background";
}

GroundTruth ground_truth_from_string(std::string_view s) {
  if (s == "Botnet") return GroundTruth::Botnet;
  if (s == "Normal") return GroundTruth::Normal;
  if (s == "Background") return GroundTruth::Background;
  throw DataError("unknown label '" + std::string(s) + "'");
}

CsvHeader CsvHeader::parse(std::string_view header_line) {
  const auto cols = split_csv(trim_eol(header_line));
  auto find = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (cols[i] == name) return i;
    }
    throw DataError("header is missing column '" + std::string(name) + "'");
  };
  CsvHeader h;
  h.n_columns = cols.size();
  h.start_time = find("StartTime");
  h.duration = find("Dur");
  h.proto = find("Proto");
  h.src_addr = find("SrcAddr");
  h.src_port = find("Sport");
  h.direction = find("Dir");
  h.dst_addr = find("DstAddr");
  h.dst_port = find("Dport");
  h.state = find("State");
  h.tot_pkts = find("TotPkts");
  h.tot_bytes = find("TotBytes");
  h.src_bytes = find("SrcBytes");
  h.label = find("Label");
  return h;
}

const std::string& CsvHeader::canonical_line() {
  static const std::string line =
      "StartTime,Dur,Proto,SrcAddr,Sport,Dir,DstAddr,Dport,State,sTos,dTos,TotPkts,"
      "TotBytes,SrcBytes,Label";
  return line;
}

std::string derive_service(std::string_view proto, std::string_view dst_port) {
  const auto p = lower(proto);
  const auto port = port_number(dst_port);
  if (!port) return "other";
  if (*port == 53 && (p == "udp" || p == "tcp")) return "dns";
  if (p != "tcp") return "other";
  switch (*port) {
    case 25: return "smtp";
    case 443: return "ssl";
    case 80: return "http";
    default: return "other";
  }
}

FlowRecord parse_flow_line(std::string_view line, const CsvHeader& header,
                           std::size_t line_no) {
  const auto cols = split_csv(trim_eol(line));
  if (cols.size() != header.n_columns) {
    throw ParseError(line_no, "wrong column count: expected " +
                                  std::to_string(header.n_columns) + ", got " +
                                  std::to_string(cols.size()));
  }
  FlowRecord f;
  try {
    f.start_time = parse_timestamp(cols[header.start_time]);
  } catch (const DataError& e) {
    throw ParseError(line_no, e.what());
  }
  if (!parse_real(cols[header.duration], f.duration)) {
    throw ParseError(line_no, "non-numeric duration '" + std::string(cols[header.duration]) + "'");
  }
  if (f.duration < 0.0) throw ParseError(line_no, "negative duration");
  auto count = [&](std::size_t idx, const char* name) {
    std::uint64_t v = 0;
    if (!parse_int(cols[idx], v)) {
      throw ParseError(line_no, std::string("non-numeric ") + name + " '" +
                                    std::string(cols[idx]) + "'");
    }
    return v;
  };
  f.tot_pkts = count(header.tot_pkts, "TotPkts");
  f.tot_bytes = count(header.tot_bytes, "TotBytes");
  f.src_bytes = count(header.src_bytes, "SrcBytes");
  if (f.src_bytes > f.tot_bytes) throw ParseError(line_no, "SrcBytes exceeds TotBytes");
  f.proto = std::string(cols[header.proto]);
  f.src_addr = std::string(cols[header.src_addr]);
  f.src_port = std::string(cols[header.src_port]);
  f.direction = std::string(cols[header.direction]);
  f.dst_addr = std::string(cols[header.dst_addr]);
  f.dst_port = std::string(cols[header.dst_port]);
  f.state = std::string(cols[header.state]);
  f.label_raw = std::string(cols[header.label]);
  f.service = derive_service(f.proto, f.dst_port);
  return f;
}

std::string to_csv_line(const FlowRecord& f) {
  std::string out = format_timestamp(f.start_time);
  auto add = [&](std::string_view s) {
    out += ',';
    out += s;
  };
  add(format_real(f.duration));
  add(f.proto);
  add(f.src_addr);
  add(f.src_port);
  add(f.direction);
  add(f.dst_addr);
  add(f.dst_port);
  add(f.state);
  add("");
  add("");
  add(std::to_string(f.tot_pkts));
  add(std::to_string(f.tot_bytes));
  add(std::to_string(f.src_bytes));
  add(f.label_raw);
  return out;
}

GroundTruth label_of(const FlowRecord& flow) {
  const auto l = lower(flow.label_raw);
  if (l.find("botnet") != std::string::npos) return GroundTruth::Botnet;
  if (l.find("normal") != std::string::npos) return GroundTruth::Normal;
  return GroundTruth::Background;
}

CsvFlowSource::CsvFlowSource(std::istream& in, ParseOptions opts, std::string name)
    : in_(in), opts_(opts) {
  stats_.path = std::move(name);
}

std::optional<FlowRecord> CsvFlowSource::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (trim_eol(line).empty()) continue;
    if (!header_) {
      header_ = CsvHeader::parse(line);
      continue;
    }
    try {
      auto rec = parse_flow_line(line, *header_, line_no_);
      ++stats_.records;
      return rec;
    } catch (const ParseError&) {
      if (opts_.strict) throw;
      ++stats_.errors;
    }
  }
  return std::nullopt;
}

struct DatasetReader::Cursor {
  std::ifstream file;
  std::unique_ptr<CsvFlowSource> lazy;
  std::vector<FlowRecord> buffered;
  std::size_t pos = 0;
  std::optional<FlowRecord> head;
  FileStats* stats = nullptr;

  void advance() {
    if (lazy) {
      head = lazy->next();
      stats->records = lazy->stats().records;
      stats->errors = lazy->stats().errors;
    } else if (pos < buffered.size()) {
      head = std::move(buffered[pos++]);
    } else {
      head.reset();
    }
  }
};

namespace {

// Checks whether the parseable rows of a file are already in time order.
bool file_is_sorted(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  std::optional<CsvHeader> header;
  std::optional<Timestamp> prev;
  while (std::getline(in, line)) {
    if (trim_eol(line).empty()) continue;
    if (!header) {
      header = CsvHeader::parse(line);
      continue;
    }
    const auto cols = split_csv(trim_eol(line));
    if (cols.size() != header->n_columns) continue;
    try {
      const auto ts = parse_timestamp(cols[header->start_time]);
      if (prev && ts < *prev) return false;
      prev = ts;
    } catch (const DataError&) {
    }
  }
  return true;
}

}  // namespace

DatasetReader::DatasetReader(std::vector<std::filesystem::path> paths, ParseOptions opts) {
  stats_.resize(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    auto c = std::make_unique<Cursor>();
    c->stats = &stats_[i];
    c->stats->path = paths[i].string();
    c->file.open(paths[i]);
    if (!c->file) throw DataError("cannot open '" + paths[i].string() + "'");
    if (file_is_sorted(paths[i])) {
      c->lazy = std::make_unique<CsvFlowSource>(c->file, opts, paths[i].string());
    } else {
      CsvFlowSource src(c->file, opts, paths[i].string());
      while (auto rec = src.next()) c->buffered.push_back(std::move(*rec));
      std::stable_sort(c->buffered.begin(), c->buffered.end(),
                       [](const FlowRecord& a, const FlowRecord& b) {
                         return a.start_time < b.start_time;
                       });
      *c->stats = src.stats();
      c->stats->resorted = true;
    }
    c->advance();
    cursors_.push_back(std::move(c));
  }
}

DatasetReader::~DatasetReader() = default;

std::optional<FlowRecord> DatasetReader::next() {
  Cursor* best = nullptr;
  for (auto& c : cursors_) {
    if (!c->head) continue;
    if (!best || c->head->start_time < best->head->start_time) best = c.get();
  }
  if (!best) return std::nullopt;
  FlowRecord out = std::move(*best->head);
  best->advance();
  return out;
}

std::vector<FlowRecord> read_dataset(const std::vector<std::filesystem::path>& paths,
                                     ParseOptions opts, std::vector<FileStats>* stats) {
  DatasetReader reader(paths, opts);
  std::vector<FlowRecord> out;
  while (auto rec = reader.next()) out.push_back(std::move(*rec));
  if (stats) *stats = reader.stats();
  return out;
}

ScenarioManifest ScenarioManifest::load(const std::filesystem::path& path) {
  ScenarioManifest m;
  m.base_dir = path.parent_path();
  try {
    const auto j = nlohmann::json::parse(read_text_file(path.string()));
    for (const auto& [id, files] : j.at("scenarios").items()) {
      m.scenarios[id] = files.is_string() ? std::vector<std::string>{files.get<std::string>()}
                                          : files.get<std::vector<std::string>>();
    }
    auto ids = [&](const char* key) {
      std::vector<std::string> out;
      if (!j.contains(key)) return out;
      for (const auto& v : j.at(key)) out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      return out;
    };
    m.train = ids("train");
    m.test = ids("test");
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad scenario manifest '" + path.string() + "': " + e.what());
  }
  return m;
}

std::vector<std::filesystem::path> ScenarioManifest::files(const std::vector<std::string>& ids) const {
  std::vector<std::filesystem::path> out;
  for (const auto& id : ids) {
    const auto it = scenarios.find(id);
    if (it == scenarios.end()) throw DataError("scenario '" + id + "' is not in the manifest");
    for (const auto& f : it->second) {
      const std::filesystem::path p(f);
      out.push_back(p.is_absolute() ? p : base_dir / p);
    }
  }
  return out;
}

}  // namespace flowrvae
