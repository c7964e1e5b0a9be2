// Copyright 2026 The iotfp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "iotfp/key_packets.h"

#include <algorithm>
#include <cmath>

#include "iotfp/errors.h"

namespace iotfp {

DestTuple dest_tuple(const PacketRecord &r) {
  if (r.direction == Direction::kLanToWan) {
    return {r.dst_ip, r.dst_port, r.proto};
  }
  return {r.src_ip, r.src_port, r.proto};
}

void ExtractionConfig::validate() const {
  if (t_b_us <= 0) throw ConfigError("t_b must be positive");
  if (!(eta > 0 && eta < 1)) throw ConfigError("eta must lie in (0, 1)");
}

std::map<DestTuple, Trace> split_by_destination(const Trace &trace) {
  std::map<DestTuple, Trace> groups;
  for (const auto &r : trace.records) {
    auto &g = groups[dest_tuple(r)];
    g.epoch_us = trace.epoch_us;
    g.records.push_back(r);
  }
  return groups;
}

std::vector<Burst> extract_bursts(const Trace &sub, std::int64_t t_b_us) {
  if (t_b_us <= 0) throw ConfigError("t_b must be positive");
  std::vector<Burst> bursts;
  std::int64_t prev = 0;
  for (const auto &r : sub.records) {
    if (bursts.empty() || r.timestamp_us - prev > t_b_us) {
      bursts.push_back({r.timestamp_us, {}});
    }
    bursts.back().pkts.push_back(directional_size(r));
    prev = r.timestamp_us;
  }
  return bursts;
}

double burst_interval_cv(const std::vector<Burst> &bursts, double *mean_out) {
  if (bursts.size() < 2) throw ContractError("cv needs at least two bursts");
  const std::size_t m = bursts.size() - 1;
  double sum = 0;
  for (std::size_t i = 0; i < m; ++i) {
    sum += static_cast<double>(bursts[i + 1].ts - bursts[i].ts);
  }
  const double mean = sum / static_cast<double>(m);
  double sq = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = static_cast<double>(bursts[i + 1].ts - bursts[i].ts) - mean;
    sq += d * d;
  }
  if (mean_out) *mean_out = mean;
  return std::sqrt(sq / static_cast<double>(m)) / mean;
}

KeyPacketSet extract_key_packets(const Trace &device,
                                 const ExtractionConfig &cfg) {
  cfg.validate();
  // size -> best entry so far; groups arrive in tuple order, so ties on the
  // period keep the first group.
  std::map<DirectionalSize, KeyPacket> best;
  for (const auto &[tuple, sub] : split_by_destination(device)) {
    const auto bursts = extract_bursts(sub, cfg.t_b_us);
    if (bursts.size() < 2) continue;
    double period = 0;
    const double cv = burst_interval_cv(bursts, &period);
    if (!(cv < cfg.eta) || bursts.size() <= cfg.min_bursts) continue;
    for (const auto &b : bursts) {
      for (const auto size : b.pkts) {
        auto it = best.find(size);
        if (it == best.end()) {
          best.emplace(size, KeyPacket{size, period, cv, tuple});
        } else if (period < it->second.period_us) {
          it->second = KeyPacket{size, period, cv, tuple};
        }
      }
    }
  }
  KeyPacketSet set;
  set.entries.reserve(best.size());
  for (auto &[size, kp] : best) set.entries.push_back(kp);
  return set;
}

TopKeys select_top_n(const KeyPacketSet &set, std::size_t n) {
  if (n == 0) throw ConfigError("n must be at least 1");
  if (set.entries.empty()) throw EmptyModelError("no key packets extracted");
  auto sorted = set.entries;
  std::sort(sorted.begin(), sorted.end(),
            [](const KeyPacket &a, const KeyPacket &b) {
              if (a.period_us != b.period_us) return a.period_us < b.period_us;
              return a.size < b.size;
            });
  TopKeys top;
  top.shortfall = sorted.size() < n;
  for (std::size_t i = 0; i < std::min(n, sorted.size()); ++i) {
    top.keys.push_back(sorted[i].size);
  }
  return top;
}

}  // namespace iotfp
