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

#include "iotfp/harness.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "iotfp/errors.h"

namespace iotfp {

void MixConfig::validate() const {
  if (vpn_overhead_bytes < 0) throw ConfigError("vpn overhead must be >= 0");
}

Trace apply_middlebox(const Trace &trace, const MixConfig &cfg) {
  cfg.validate();
  Trace out;
  out.epoch_us = trace.epoch_us;
  out.records.reserve(trace.size());

  // (lan ip, lan port, proto, wan ip, wan port) -> external port
  using FlowKey = std::tuple<Ipv4, std::uint16_t, L4Proto, Ipv4, std::uint16_t>;
  std::map<FlowKey, std::uint16_t> nat_ports;
  Rng rng(cfg.rng_seed);
  constexpr std::uint32_t kPortLo = 1024, kPortSpan = 65536 - kPortLo;
  std::uint32_t next_port = static_cast<std::uint32_t>(rng.below(kPortSpan));

  for (auto r : trace.records) {
    const bool outbound = r.direction == Direction::kLanToWan;
    if (cfg.mode == MixMode::kNat) {
      Ipv4 &lan_ip = outbound ? r.src_ip : r.dst_ip;
      std::uint16_t &lan_port = outbound ? r.src_port : r.dst_port;
      const FlowKey key{lan_ip, lan_port, r.proto, outbound ? r.dst_ip : r.src_ip,
                        outbound ? r.dst_port : r.src_port};
      auto [it, fresh] = nat_ports.try_emplace(key, 0);
      if (fresh) {
        it->second = static_cast<std::uint16_t>(kPortLo + next_port % kPortSpan);
        ++next_port;
      }
      lan_ip = cfg.nat_ip;
      lan_port = it->second;
    } else {
      const auto &t = cfg.vpn_tuple;
      r.src_ip = outbound ? t.src_ip : t.dst_ip;
      r.dst_ip = outbound ? t.dst_ip : t.src_ip;
      r.src_port = outbound ? t.src_port : t.dst_port;
      r.dst_port = outbound ? t.dst_port : t.src_port;
      r.proto = t.proto;
      r.ip_total_len = static_cast<std::uint16_t>(
          std::min(r.ip_total_len + cfg.vpn_overhead_bytes, kMtu));
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

Trace mix_traces(std::span<const Trace> iot, const Trace &background,
                 const MixConfig &cfg) {
  cfg.validate();
  struct Tagged {
    const PacketRecord *r;
    std::int64_t ts;
  };
  std::vector<Tagged> all;
  std::size_t total = background.size();
  for (const auto &t : iot) total += t.size();
  all.reserve(total);

  for (const auto &t : iot) {
    std::int64_t shift = 0;
    if (!t.empty() && !background.empty()) {
      const auto b0 = background.records.front().timestamp_us;
      const auto b1 = background.records.back().timestamp_us;
      const auto t0 = t.records.front().timestamp_us;
      const auto t1 = t.records.back().timestamp_us;
      if (t1 < b0 || t0 > b1) shift = b0 - t0;
    }
    for (const auto &r : t.records) all.push_back({&r, r.timestamp_us + shift});
  }
  for (const auto &r : background.records) all.push_back({&r, r.timestamp_us});
  std::stable_sort(all.begin(), all.end(),
                   [](const Tagged &a, const Tagged &b) { return a.ts < b.ts; });

  Trace merged;
  merged.epoch_us = background.empty() && !iot.empty() ? iot.front().epoch_us
                                                       : background.epoch_us;
  merged.records.reserve(all.size());
  for (const auto &t : all) {
    merged.records.push_back(*t.r);
    merged.records.back().timestamp_us = t.ts;
  }
  return apply_middlebox(merged, cfg);
}

Trace label_by_matching(const Trace &pre, const Trace &post, MixMode mode,
                        std::int64_t max_dt_us) {
  Trace out = post;
  for (auto &r : out.records) r.device_label.reset();
  std::vector<char> used(pre.size(), 0);
  std::size_t lo = 0;
  for (auto &r : out.records) {
    while (lo < pre.size() &&
           pre.records[lo].timestamp_us <= r.timestamp_us - max_dt_us) {
      ++lo;
    }
    for (std::size_t i = lo; i < pre.size(); ++i) {
      const auto &p = pre.records[i];
      if (p.timestamp_us >= r.timestamp_us + max_dt_us) break;
      if (used[i] || !p.device_label || p.direction != r.direction) continue;
      if (mode == MixMode::kVpn && !(p.ip_total_len < r.ip_total_len)) continue;
      used[i] = 1;
      r.device_label = p.device_label;
      break;
    }
  }
  return out;
}

Trace generate_synthetic_device(const DeviceSpec &spec, std::int64_t duration_us,
                                Rng &rng) {
  for (const auto &b : spec.bursts) {
    if (b.period_us <= 0) throw ConfigError("burst period must be positive");
    if (!(b.jitter >= 0 && b.jitter < 0.5)) {
      throw ConfigError("burst jitter must lie in [0, 0.5)");
    }
    if (b.sizes.empty()) throw ConfigError("burst needs at least one size");
    for (const auto size : b.sizes) {
      if (size.ip_len() < kMinIpLen) {
        throw ConfigError("burst size " + std::to_string(size.value()) +
                          " has no IP length");
      }
    }
  }
  if (spec.intra_gap_us <= 0) throw ConfigError("intra-burst gap must be positive");

  Trace out;
  for (std::size_t i = 0; i < spec.bursts.size(); ++i) {
    const auto &b = spec.bursts[i];
    // Public-looking server in 52.0.0.0/8, distinct per burst spec.
    const Ipv4 server = 0x34000000u | static_cast<Ipv4>(rng.below(1u << 24));
    const auto server_port = static_cast<std::uint16_t>(443 + 1000 * (i % 8));
    const auto device_port = static_cast<std::uint16_t>(40000 + i);
    const auto period = static_cast<double>(b.period_us);
    const double phase = rng.uniform(0, period);
    for (std::int64_t n = 0;; ++n) {
      const double jitter = b.jitter > 0 ? rng.uniform(-b.jitter, b.jitter) * period : 0;
      const auto start = static_cast<std::int64_t>(
          std::llround(phase + static_cast<double>(n) * period + jitter));
      if (start >= duration_us) break;
      std::int64_t ts = std::max<std::int64_t>(start, 0);
      for (std::size_t k = 0; k < b.sizes.size(); ++k) {
        if (k > 0) {
          ts += static_cast<std::int64_t>(std::llround(
              rng.uniform(0.5, 1.5) * static_cast<double>(spec.intra_gap_us)));
        }
        if (ts >= duration_us) break;
        const auto size = b.sizes[k];
        PacketRecord r;
        r.timestamp_us = ts;
        r.proto = L4Proto::kTcp;
        r.ip_total_len = static_cast<std::uint16_t>(size.ip_len());
        r.direction = size.direction();
        if (r.direction == Direction::kLanToWan) {
          r.src_ip = spec.lan_ip;
          r.src_port = device_port;
          r.dst_ip = server;
          r.dst_port = server_port;
        } else {
          r.src_ip = server;
          r.src_port = server_port;
          r.dst_ip = spec.lan_ip;
          r.dst_port = device_port;
        }
        r.device_label = spec.device_id;
        out.records.push_back(std::move(r));
      }
    }
  }
  sort_by_time(out.records);
  return out;
}

std::vector<SizeComponent> default_background_sizes() {
  return {{0.45, 40, 100}, {0.30, 101, 1399}, {0.25, 1400, 1500}};
}

Trace generate_synthetic_background(const BackgroundConfig &cfg,
                                    std::int64_t duration_us, Rng &rng) {
  if (!(cfg.rate_pps > 0)) throw ConfigError("background rate must be positive");
  if (cfg.sizes.empty()) throw ConfigError("background size mixture is empty");
  if (cfg.lan_hosts == 0 || cfg.wan_hosts == 0) {
    throw ConfigError("background needs LAN and WAN hosts");
  }
  std::vector<double> cumulative;
  double acc = 0;
  for (const auto &c : cfg.sizes) {
    if (!(c.weight >= 0) || c.lo < kMinIpLen || c.hi > kMtu || c.lo > c.hi) {
      throw ConfigError("invalid background size component");
    }
    acc += c.weight;
    cumulative.push_back(acc);
  }
  if (!(acc > 0)) throw ConfigError("background size weights sum to zero");

  // LAN hosts in 172.16.0.0/12, WAN hosts in 34.0.0.0/8.
  std::vector<Ipv4> lan(cfg.lan_hosts), wan(cfg.wan_hosts);
  for (std::size_t i = 0; i < lan.size(); ++i) {
    lan[i] = 0xac100000u + static_cast<Ipv4>(i + 2);
  }
  for (auto &w : wan) w = 0x22000000u | static_cast<Ipv4>(rng.below(1u << 24));
  static constexpr std::uint16_t kWanPorts[] = {443, 80, 8080, 8443, 123, 993};

  Trace out;
  const double rate_per_us = cfg.rate_pps / 1e6;
  double t = rng.exponential(rate_per_us);
  while (t < static_cast<double>(duration_us)) {
    PacketRecord r;
    r.timestamp_us = static_cast<std::int64_t>(t);
    const double u = rng.uniform01() * acc;
    const auto ci = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    const auto &c = cfg.sizes[std::min(ci, cfg.sizes.size() - 1)];
    r.ip_total_len = static_cast<std::uint16_t>(
        c.lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(c.hi - c.lo + 1))));
    r.direction = rng.uniform01() < cfg.inbound_fraction ? Direction::kWanToLan
                                                         : Direction::kLanToWan;
    r.proto = rng.below(5) == 0 ? L4Proto::kUdp : L4Proto::kTcp;
    const Ipv4 l = lan[rng.below(lan.size())];
    const Ipv4 w = wan[rng.below(wan.size())];
    const auto lport = static_cast<std::uint16_t>(32768 + rng.below(28000));
    const auto wport = kWanPorts[rng.below(std::size(kWanPorts))];
    if (r.direction == Direction::kLanToWan) {
      r.src_ip = l, r.src_port = lport, r.dst_ip = w, r.dst_port = wport;
    } else {
      r.src_ip = w, r.src_port = wport, r.dst_ip = l, r.dst_port = lport;
    }
    out.records.push_back(std::move(r));
    t += rng.exponential(rate_per_us);
  }
  return out;
}

Split split_indices(std::size_t n, std::uint64_t seed,
                    std::array<unsigned, 3> ratio) {
  const std::uint64_t sum = std::uint64_t{ratio[0]} + ratio[1] + ratio[2];
  if (sum == 0) throw ConfigError("split ratio must not be all zero");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx.begin(), idx.end());

  std::array<std::size_t, 3> count{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    count[i] = static_cast<std::size_t>(n * std::uint64_t{ratio[i]} / sum);
    assigned += count[i];
  }
  for (int i = 0; assigned < n; i = (i + 1) % 3) {
    if (ratio[i] == 0) continue;
    ++count[i];
    ++assigned;
  }
  Split s;
  auto it = idx.begin();
  s.train.assign(it, it + count[0]);
  it += count[0];
  s.val.assign(it, it + count[1]);
  it += count[1];
  s.test.assign(it, it + count[2]);
  return s;
}

std::vector<int> window_labels(const Trace &trace, std::span<const Window> windows,
                               const std::string &device_id) {
  std::vector<int> labels;
  labels.reserve(windows.size());
  for (const auto &w : windows) {
    int y = 0;
    for (auto i : w.records) {
      const auto &l = trace.records[i].device_label;
      if (l && *l == device_id) {
        y = 1;
        break;
      }
    }
    labels.push_back(y);
  }
  return labels;
}

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(const std::optional<double> &x) {
  if (!x) return "undefined";
  std::ostringstream s;
  s.precision(6);
  s << *x;
  return s.str();
}

}  // namespace

std::optional<double> Confusion::precision() const { return ratio(tp, tp + fp); }
std::optional<double> Confusion::recall() const { return ratio(tp, tp + fn); }
std::optional<double> Confusion::fpr() const { return ratio(fp, fp + tn); }
std::optional<double> Confusion::base_rate() const { return ratio(tp + fn, total()); }

Confusion &Confusion::operator+=(const Confusion &o) {
  tp += o.tp, fp += o.fp, tn += o.tn, fn += o.fn;
  return *this;
}

Confusion confusion(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw ContractError("prediction and truth lengths differ");
  }
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] != 0, t = truth[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::string EvalReport::to_text() const {
  std::ostringstream s;
  s << "device=" << device_id << " tp=" << counts.tp << " fp=" << counts.fp
    << " tn=" << counts.tn << " fn=" << counts.fn
    << " precision=" << fmt(counts.precision())
    << " recall=" << fmt(counts.recall()) << " fpr=" << fmt(counts.fpr())
    << " base_rate=" << fmt(counts.base_rate())
    << " unmatched_detections=" << unmatched_detections;
  return s.str();
}

std::string EvalReport::csv_header() {
  return "device_id,tp,fp,tn,fn,precision,recall,fpr,base_rate";
}

std::string EvalReport::to_csv_row() const {
  const auto cell = [](const std::optional<double> &x) {
    return x ? fmt(x) : std::string();
  };
  std::ostringstream s;
  s << device_id << "," << counts.tp << "," << counts.fp << "," << counts.tn
    << "," << counts.fn << "," << cell(counts.precision()) << ","
    << cell(counts.recall()) << "," << cell(counts.fpr()) << ","
    << cell(counts.base_rate());
  return s.str();
}

EvalReport evaluate(std::span<const Detection> detections, const Trace &trace,
                    std::span<const Window> windows, const std::string &device_id) {
  std::map<std::pair<Ipv4, std::int64_t>, int> predicted;
  for (const auto &d : detections) {
    if (d.device_id != device_id) continue;
    predicted[{d.ip_key, d.window_start_us}] = d.label;
  }
  const auto truth = window_labels(trace, windows, device_id);
  std::vector<int> pred(windows.size(), 0);
  std::size_t joined = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto it = predicted.find({windows[i].ip_key, windows[i].start_us});
    if (it == predicted.end()) continue;
    pred[i] = it->second;
    ++joined;
  }
  if (joined == 0) {
    throw EmptyModelError("no detection of " + device_id +
                          " lines up with a ground-truth window");
  }
  EvalReport report;
  report.device_id = device_id;
  report.counts = confusion(pred, truth);
  report.unmatched_detections = predicted.size() - joined;
  return report;
}

}  // namespace iotfp
