// SPDX-License-Identifier: Apache-2.0
#include "flowrvae/synth.hpp"

#include <algorithm>
#include <cmath>

#include "flowrvae/rng.hpp"
#include "flowrvae/util.hpp"

namespace flowrvae {

namespace {

std::string ip(int a, int b, int c, int d) {
  return std::to_string(a) + '.' + std::to_string(b) + '.' + std::to_string(c) + '.' + std::to_string(d);
}

struct Emitter {
  const SynthConfig& cfg;
  Rng& rng;
  std::vector<FlowRecord>& out;

  /// A flow starting uniformly inside window w.
  void flow(std::int64_t w, const std::string& src, const std::string& proto, const std::string& dst,
            const std::string& dport, const std::string& state, double dur, std::uint64_t pkts,
            std::uint64_t bytes, const std::string& label, bool at_window_start = false) {
    FlowRecord f;
    const double offset = (static_cast<double>(w) + (at_window_start ? 0.0 : rng.uniform())) * cfg.window_seconds;
    f.start_time = Timestamp{cfg.start.micros + static_cast<std::int64_t>(std::floor(offset * 1e6))};
    f.duration = std::round(dur * 1e6) / 1e6;
    f.proto = proto;
    f.src_addr = src;
    f.src_port = proto == "icmp" ? "" : std::to_string(1024 + rng.below(64000));
    f.direction = "->";
    f.dst_addr = dst;
    f.dst_port = dport;
    f.state = state;
    f.service = derive_service(proto, dport);
    f.tot_pkts = std::max<std::uint64_t>(pkts, 1);
    f.tot_bytes = std::max<std::uint64_t>(bytes, 60 * f.tot_pkts);
    f.src_bytes = f.tot_bytes / 2;
    f.label_raw = label;
    out.push_back(std::move(f));
  }
};

}  // namespace

std::vector<FlowRecord> synth_flows(const SynthConfig& cfg) {
  Rng rng(cfg.seed);
  std::vector<FlowRecord> out;
  Emitter em{cfg, rng, out};
  const int net = 10 + cfg.subnet;

  struct NormalHost {
    std::string addr, resolver;
    std::vector<std::string> web, tls;
    int period, phase;
    double dns_rate, web_rate, tls_rate;
  };
  std::vector<NormalHost> normals;
  for (std::size_t h = 0; h < cfg.normal_hosts; ++h) {
    NormalHost n;
    n.addr = ip(147, 32, net, static_cast<int>(10 + h));
    n.resolver = ip(147, 32, 80, 9);
    for (std::uint64_t i = 0, k = 1 + rng.below(3); i < k; ++i) n.web.push_back(ip(93, 184, 216, static_cast<int>(rng.below(8))));
    for (std::uint64_t i = 0, k = 1 + rng.below(2); i < k; ++i) n.tls.push_back(ip(173, 194, 44, static_cast<int>(rng.below(8))));
    n.period = 2 + static_cast<int>(rng.below(3));
    n.phase = static_cast<int>(rng.below(static_cast<std::uint64_t>(n.period)));
    n.dns_rate = rng.uniform(2.0, 4.0);
    n.web_rate = rng.uniform(2.0, 5.0);
    n.tls_rate = rng.uniform(1.0, 3.0);
    normals.push_back(std::move(n));
  }

  // A lookup at the very start pins t0 (the first flow) to the window grid.
  if (!normals.empty()) {
    em.flow(0, normals[0].addr, "udp", normals[0].resolver, "53", "CON", 0.01, 2, 160,
            "flow=From-Normal-V42-Grill", true);
  }

  for (std::int64_t w = 0; w < cfg.windows; ++w) {
    for (const auto& n : normals) {
      const bool bump = (w % n.period) == n.phase;
      const std::string label = "flow=From-Normal-V42-Grill";
      for (std::uint64_t i = 0, k = rng.poisson(n.dns_rate + (bump ? 2.0 : 0.0)); i < k; ++i) {
        em.flow(w, n.addr, "udp", n.resolver, "53", "CON", rng.uniform(0.0, 0.05), 2,
                120 + rng.below(180), label);
      }
      for (std::uint64_t i = 0, k = rng.poisson(n.web_rate + (bump ? 1.5 : 0.0)); i < k; ++i) {
        em.flow(w, n.addr, "tcp", n.web[rng.below(n.web.size())], "80", "FSPA_FSPA",
                rng.uniform(0.2, 3.0), 8 + rng.below(20), 2000 + rng.below(18000), label);
      }
      for (std::uint64_t i = 0, k = rng.poisson(n.tls_rate); i < k; ++i) {
        em.flow(w, n.addr, "tcp", n.tls[rng.below(n.tls.size())], "443", "FSPA_FSPA",
                rng.uniform(0.5, 5.0), 10 + rng.below(30), 3000 + rng.below(27000), label);
      }
    }

    for (std::size_t b = 0; b < cfg.botnet_hosts; ++b) {
      if (rng.uniform() >= cfg.botnet_activity) continue;
      const std::string addr = ip(147, 32, net, static_cast<int>(200 + b));
      if (rng.uniform() < 0.5) {
        const std::string label = "flow=From-Botnet-V42-TCP-Attempt";
        for (std::uint64_t i = 0, k = 80 + rng.below(120); i < k; ++i) {
          const char* ports[] = {"445", "139", "135", "22", "23"};
          const std::string port = rng.uniform() < 0.7 ? ports[rng.below(5)] : std::to_string(1 + rng.below(65535));
          em.flow(w, addr, "tcp", ip(static_cast<int>(1 + rng.below(223)), static_cast<int>(rng.below(256)),
                                     static_cast<int>(rng.below(256)), static_cast<int>(1 + rng.below(254))),
                  port, rng.uniform() < 0.6 ? "S_RA" : "S_", rng.uniform(0.0, 3.0), 1 + rng.below(3),
                  60 + rng.below(120), label);
        }
      } else {
        const std::string label = "flow=From-Botnet-V42-TCP-Established-SPAM";
        for (std::uint64_t i = 0, k = 30 + rng.below(60); i < k; ++i) {
          em.flow(w, addr, "tcp", ip(static_cast<int>(1 + rng.below(223)), static_cast<int>(rng.below(256)),
                                     static_cast<int>(rng.below(256)), static_cast<int>(1 + rng.below(254))),
                  "25", rng.uniform() < 0.7 ? "FSPA_FSPA" : "S_RA", rng.uniform(0.5, 8.0),
                  6 + rng.below(20), 800 + rng.below(4000), label);
        }
        for (std::uint64_t i = 0, k = 5 + rng.below(10); i < k; ++i) {
          em.flow(w, addr, "udp", ip(147, 32, 80, 9), "53", "CON", rng.uniform(0.0, 0.05), 2,
                  120 + rng.below(120), label);
        }
      }
    }

    for (std::size_t g = 0; g < cfg.background_hosts; ++g) {
      if (rng.uniform() >= 0.5) continue;
      const std::string addr = ip(147, 32, net, static_cast<int>(100 + g));
      const std::string label = "flow=Background-UDP-Established";
      for (std::uint64_t i = 0, k = 1 + rng.poisson(3.0); i < k; ++i) {
        const double r = rng.uniform();
        if (r < 0.5) {
          em.flow(w, addr, "udp", ip(147, 32, net, static_cast<int>(255)), "137", "INT",
                  rng.uniform(0.0, 1.0), 1 + rng.below(3), 78 + rng.below(200), label);
        } else if (r < 0.8) {
          em.flow(w, addr, "tcp", ip(74, 125, 232, static_cast<int>(rng.below(32))), "443", "FSPA_FSPA",
                  rng.uniform(0.5, 10.0), 10 + rng.below(40), 2000 + rng.below(40000), label);
        } else {
          em.flow(w, addr, "icmp", ip(147, 32, 80, 1), "0x0008", "URP", 0.0, 1, 98, label);
        }
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const FlowRecord& a, const FlowRecord& b) { return a.start_time < b.start_time; });
  return out;
}

void write_flows(const std::string& path, const std::vector<FlowRecord>& flows) {
  std::string text = CsvHeader::canonical_line() + "\n";
  for (const auto& f : flows) text += to_csv_line(f) + "\n";
  write_text_file(path, text);
}

}  // namespace flowrvae
