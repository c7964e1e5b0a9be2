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

// Key-packet extraction: packets that recur in bursts with a stable period
// towards one server.

#ifndef IOTFP_KEY_PACKETS_H_
#define IOTFP_KEY_PACKETS_H_

#include <cstdint>
#include <map>
#include <vector>

#include "iotfp/trace.h"

namespace iotfp {

// Server-side flow identity. Outbound packets use (dst_ip, dst_port, proto),
// inbound ones the mirrored (src_ip, src_port, proto).
struct DestTuple {
  Ipv4 ip = 0;
  std::uint16_t port = 0;
  L4Proto proto = L4Proto::kOther;

  friend auto operator<=>(const DestTuple &, const DestTuple &) = default;
};

DestTuple dest_tuple(const PacketRecord &r);

struct Burst {
  std::int64_t ts = 0;  // first packet timestamp (us)
  std::vector<DirectionalSize> pkts;
};

struct ExtractionConfig {
  std::int64_t t_b_us = 1'000'000;
  double eta = 0.2;
  // A group qualifies only with strictly more bursts than this.
  std::size_t min_bursts = 5;

  void validate() const;  // throws ConfigError
};

struct KeyPacket {
  DirectionalSize size;
  double period_us = 0;
  double cv = 0;
  DestTuple dest;

  friend bool operator==(const KeyPacket &, const KeyPacket &) = default;
};

// Deduplicated by size, ascending by size.
struct KeyPacketSet {
  std::vector<KeyPacket> entries;
};

std::map<DestTuple, Trace> split_by_destination(const Trace &trace);

// Gap rule: a new burst starts at the first packet and whenever the gap to
// the previous packet exceeds t_b_us.
std::vector<Burst> extract_bursts(const Trace &sub, std::int64_t t_b_us);

// Population coefficient of variation of the start-to-start intervals.
// Requires at least two bursts.
double burst_interval_cv(const std::vector<Burst> &bursts, double *mean_out);

KeyPacketSet extract_key_packets(const Trace &device,
                                 const ExtractionConfig &cfg);

struct TopKeys {
  std::vector<DirectionalSize> keys;
  bool shortfall = false;  // fewer than n candidates were available
};

// Ascending by period, ties by size, truncated to n. Throws EmptyModelError
// on an empty set and ConfigError when n == 0.
TopKeys select_top_n(const KeyPacketSet &set, std::size_t n);

}  // namespace iotfp

#endif  // IOTFP_KEY_PACKETS_H_
