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

// Canonical packet-trace representation plus CSV/pcap ingestion and the
// ISP-visibility filter.

#ifndef IOTFP_TRACE_H_
#define IOTFP_TRACE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace iotfp {

using Ipv4 = std::uint32_t;  // host byte order

enum class Direction : std::uint8_t { kLanToWan = 0, kWanToLan = 1 };

enum class L4Proto : std::uint8_t { kTcp, kUdp, kOther };

inline constexpr int kMinIpLen = 20;
inline constexpr int kMtu = 1500;
// Number of distinct directional packet sizes (rows of the embedding table).
inline constexpr int kNumDirSizes = 2 * kMtu;

struct PacketRecord {
  std::int64_t timestamp_us = 0;
  Ipv4 src_ip = 0;
  Ipv4 dst_ip = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  L4Proto proto = L4Proto::kOther;
  std::uint16_t ip_total_len = kMinIpLen;
  Direction direction = Direction::kLanToWan;
  std::optional<std::string> device_label;

  friend bool operator==(const PacketRecord &, const PacketRecord &) = default;
};

// Directional packet size: the IP total length, shifted by one MTU for
// WAN-to-LAN packets so both directions share one index space [20, 3000].
class DirectionalSize {
 public:
  constexpr DirectionalSize() = default;
  // Throws RangeError unless value lies in [20, 3000].
  explicit DirectionalSize(int value);

  constexpr int value() const { return value_; }
  Direction direction() const {
    return value_ > kMtu ? Direction::kWanToLan : Direction::kLanToWan;
  }
  int ip_len() const { return value_ > kMtu ? value_ - kMtu : value_; }

  friend constexpr auto operator<=>(DirectionalSize, DirectionalSize) = default;

 private:
  int value_ = kMinIpLen;
};

// Throws RangeError when size is outside [20, 1500].
DirectionalSize encode_directional(int size, Direction direction);

inline DirectionalSize directional_size(const PacketRecord &r) {
  return encode_directional(r.ip_total_len, r.direction);
}

// Address of the LAN-side endpoint: the source for outbound packets, the
// destination for inbound ones. Windows and register slots key on it.
inline Ipv4 host_address(const PacketRecord &r) {
  return r.direction == Direction::kLanToWan ? r.src_ip : r.dst_ip;
}

struct Trace {
  std::vector<PacketRecord> records;
  std::int64_t epoch_us = 0;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }
};

// Traces compare by records only; the epoch is not carried by CSV.
bool operator==(const Trace &a, const Trace &b);

struct Cidr {
  Ipv4 network = 0;
  int prefix_len = 0;

  bool contains(Ipv4 addr) const;
  // Parses "a.b.c.d/len"; throws ParseError.
  static Cidr parse(std::string_view text);
};

Ipv4 parse_ipv4(std::string_view text);  // throws ParseError
std::string format_ipv4(Ipv4 addr);
std::string_view proto_name(L4Proto proto);

// RFC 1918, loopback and link-local ranges.
bool is_private(Ipv4 addr);
const std::vector<Cidr> &default_lan_prefixes();

struct CsvStats {
  std::size_t rows = 0;
  // Rows whose timestamp went backwards; the records are stably re-sorted.
  std::size_t reordered = 0;
};

// Reads the canonical CSV
//   timestamp_us,src_ip,dst_ip,src_port,dst_port,proto,ip_total_len,direction[,label]
// Throws IoError / ParseError (with the 1-based line number).
Trace parse_csv(const std::filesystem::path &path, CsvStats *stats = nullptr);
Trace parse_csv_text(std::string_view text, CsvStats *stats = nullptr);

// Writes the label column whenever any record carries a label.
void write_csv(const Trace &trace, const std::filesystem::path &path);
std::string write_csv_text(const Trace &trace);

struct PcapStats {
  std::size_t frames = 0;
  // Non-IPv4 frames and IPv4 packets with an out-of-range total length.
  std::size_t skipped = 0;
};

// Reads a classic libpcap file with Ethernet link type. Direction is
// LAN_TO_WAN iff the source address matches one of lan_prefixes.
// Timestamps are relative to the first frame; epoch_us keeps the absolute
// start. Throws IoError / ParseError / ConfigError (empty prefix list).
Trace parse_pcap(const std::filesystem::path &path,
                 std::span<const Cidr> lan_prefixes,
                 PcapStats *stats = nullptr);

// Writes records as minimal Ethernet/IPv4/L4 frames (payload zero-filled so
// that the IP total length is preserved). Used by tests and the CLI.
void write_pcap(const Trace &trace, const std::filesystem::path &path);

// Drops traffic an ISP cannot observe: DHCP, DNS answered by private
// resolvers, SSDP, mDNS and LAN-to-LAN packets. Idempotent.
Trace filter_isp_visible(const Trace &trace,
                         std::span<const Cidr> lan_prefixes);
Trace filter_isp_visible(const Trace &trace);

// Stable sort by timestamp; returns the number of out-of-order records seen.
std::size_t sort_by_time(std::vector<PacketRecord> &records);

}  // namespace iotfp

#endif  // IOTFP_TRACE_H_
