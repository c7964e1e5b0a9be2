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

// Middlebox emulation, synthetic traffic, dataset splitting and metrics.

#ifndef IOTFP_HARNESS_H_
#define IOTFP_HARNESS_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iotfp/dataplane.h"
#include "iotfp/fingerprint.h"
#include "iotfp/random.h"
#include "iotfp/trace.h"

namespace iotfp {

enum class MixMode { kNat, kVpn };

struct FiveTuple {
  Ipv4 src_ip = 0;
  Ipv4 dst_ip = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  L4Proto proto = L4Proto::kUdp;
};

struct MixConfig {
  MixMode mode = MixMode::kNat;
  Ipv4 nat_ip = 0x0a000001;  // 10.0.0.1
  int vpn_overhead_bytes = 49;
  // Outbound orientation; inbound packets carry it mirrored.
  FiveTuple vpn_tuple{0x0a000001, 0xcb00710a, 51820, 1194, L4Proto::kUdp};
  std::uint64_t rng_seed = 1;

  void validate() const;  // throws ConfigError
};

// The middlebox rewrite alone. NAT gives every LAN-side flow its own
// external port from a counter, in first-seen order.
Trace apply_middlebox(const Trace &trace, const MixConfig &cfg);

// Stable merge of the device traces and the background (ties keep input
// order: devices first, in list order, then background), followed by the
// middlebox rewrite. A device trace that does not overlap the background in
// time is shifted to start where the background starts. Labels are kept.
Trace mix_traces(std::span<const Trace> iot, const Trace &background,
                 const MixConfig &cfg);

// Cross-capture labelling: a post-middlebox packet takes the label of a
// pre-middlebox packet with the same direction, |dt| < max_dt_us and, in
// VPN mode, a strictly smaller size. Each pre packet labels at most one
// post packet; candidates are taken in time order.
Trace label_by_matching(const Trace &pre, const Trace &post, MixMode mode,
                        std::int64_t max_dt_us = 20'000);

struct BurstSpec {
  std::vector<DirectionalSize> sizes;  // emitted in this order every period
  std::int64_t period_us = 0;
  double jitter = 0;  // uniform in [-jitter * period, +jitter * period]
};

struct DeviceSpec {
  std::string device_id;
  Ipv4 lan_ip = 0xc0a80102;  // 192.168.1.2
  std::vector<BurstSpec> bursts;
  // Mean gap between packets of one burst; far below any sensible T_b.
  std::int64_t intra_gap_us = 5'000;
};

// Each burst spec talks to its own server tuple. Throws ConfigError for a
// non-positive period, a jitter outside [0, 0.5) or a size in 1501..1519.
Trace generate_synthetic_device(const DeviceSpec &spec, std::int64_t duration_us,
                                Rng &rng);

struct SizeComponent {
  double weight = 0;
  int lo = kMinIpLen;  // inclusive IP total length range
  int hi = kMtu;
};

// Small control packets and MTU-sized data dominate, with a flat middle.
std::vector<SizeComponent> default_background_sizes();

struct BackgroundConfig {
  double rate_pps = 1000;
  std::vector<SizeComponent> sizes = default_background_sizes();
  std::size_t lan_hosts = 64;
  std::size_t wan_hosts = 4096;
  double inbound_fraction = 0.5;
};

// Poisson arrivals. Throws ConfigError for a non-positive rate or an empty
// size mixture.
Trace generate_synthetic_background(const BackgroundConfig &cfg,
                                    std::int64_t duration_us, Rng &rng);

struct Split {
  std::vector<std::size_t> train, val, test;  // indices into the input
};

// Seeded shuffle, then floor(n * r_i / sum) per part with the remainder
// handed out one by one from the first part on.
Split split_indices(std::size_t n, std::uint64_t seed,
                    std::array<unsigned, 3> ratio = {4, 3, 3});

// Ground truth for one window: positive iff it holds a packet of device_id.
std::vector<int> window_labels(const Trace &trace, std::span<const Window> windows,
                               const std::string &device_id);

struct Confusion {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  std::optional<double> precision() const;  // undefined when tp + fp == 0
  std::optional<double> recall() const;
  std::optional<double> fpr() const;
  std::optional<double> base_rate() const;  // positives / total

  Confusion &operator+=(const Confusion &o);
  friend bool operator==(const Confusion &, const Confusion &) = default;
};

Confusion confusion(std::span<const int> predicted, std::span<const int> truth);

struct EvalReport {
  std::string device_id;
  Confusion counts;
  std::uint64_t unmatched_detections = 0;

  std::string to_text() const;
  static std::string csv_header();
  std::string to_csv_row() const;
};

// Windows are joined on (ip_key, window start). Ground-truth windows with
// no detection count as predicted negative. Throws EmptyModelError when no
// window overlaps.
EvalReport evaluate(std::span<const Detection> detections, const Trace &trace,
                    std::span<const Window> windows, const std::string &device_id);

}  // namespace iotfp

#endif  // IOTFP_HARNESS_H_
