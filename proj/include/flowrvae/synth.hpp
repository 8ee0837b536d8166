// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synth.hpp
 * @brief  Seeded synthetic NetFlow traffic with labelled normal, botnet and
 *         background hosts.
 *
 * Normal hosts repeat a low-entropy routine: a few DNS lookups against one
 * resolver and HTTP/SSL sessions to a handful of fixed servers, with
 * per-host periodic bumps. Botnet hosts are silent except in bursts of
 * scanning (many destinations and ports, rejected connections) or spamming
 * (SMTP to many mail servers). Background hosts emit sparse miscellaneous
 * flows.
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowrvae/ingest.hpp"

namespace flowrvae {

struct SynthConfig {
  std::uint64_t seed = 1;
  double window_seconds = 60.0;
  std::int64_t windows = 120;
  std::size_t normal_hosts = 12;
  std::size_t botnet_hosts = 3;
  std::size_t background_hosts = 4;
  /// Probability that a bot is active in a given window.
  double botnet_activity = 0.6;
  /// Distinguishes host address ranges of independently generated splits.
  int subnet = 0;
  Timestamp start = parse_timestamp("2011/08/10 09:00:00");
};

/// Flows sorted by start time, with CTU-13 style labels.
std::vector<FlowRecord> synth_flows(const SynthConfig& cfg);

/// Writes flows with the canonical binetflow header.
void write_flows(const std::string& path, const std::vector<FlowRecord>& flows);

}  // namespace flowrvae
