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

#include "iotfp/trace.h"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "iotfp/errors.h"

namespace iotfp {

namespace {

constexpr std::string_view kCsvHeader =
    "timestamp_us,src_ip,dst_ip,src_port,dst_port,proto,ip_total_len,"
    "direction";

template <typename T>
bool parse_number(std::string_view s, T &out) {
  if (s.empty()) return false;
  const auto *end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint16_t be16(const unsigned char *p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

std::uint32_t be32(const unsigned char *p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
         (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

std::uint32_t read_u32(const unsigned char *p, bool swap) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  if (swap) v = __builtin_bswap32(v);
  return v;
}

void put_be16(unsigned char *p, std::uint16_t v) {
  p[0] = static_cast<unsigned char>(v >> 8);
  p[1] = static_cast<unsigned char>(v);
}

void put_be32(unsigned char *p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>(v >> (24 - 8 * i));
}

void put_le32(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

bool in_any(Ipv4 addr, std::span<const Cidr> prefixes) {
  return std::any_of(prefixes.begin(), prefixes.end(),
                     [addr](const Cidr &c) { return c.contains(addr); });
}

}  // namespace

DirectionalSize::DirectionalSize(int value) : value_(value) {
  if (value < kMinIpLen || value > kNumDirSizes) {
    throw RangeError("directional size " + std::to_string(value) +
                     " outside [20, 3000]");
  }
}

DirectionalSize encode_directional(int size, Direction direction) {
  if (size < kMinIpLen || size > kMtu) {
    throw RangeError("ip_total_len " + std::to_string(size) +
                     " outside [20, 1500]");
  }
  return DirectionalSize(direction == Direction::kLanToWan ? size
                                                           : size + kMtu);
}

bool operator==(const Trace &a, const Trace &b) {
  return a.records == b.records;
}

bool Cidr::contains(Ipv4 addr) const {
  if (prefix_len == 0) return true;
  const Ipv4 mask = prefix_len >= 32 ? 0xffffffffu
                                     : ~((Ipv4{1} << (32 - prefix_len)) - 1);
  return (addr & mask) == (network & mask);
}

Cidr Cidr::parse(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    throw ParseError("CIDR missing prefix length: " + std::string(text));
  }
  Cidr c;
  c.network = parse_ipv4(text.substr(0, slash));
  if (!parse_number(text.substr(slash + 1), c.prefix_len) ||
      c.prefix_len < 0 || c.prefix_len > 32) {
    throw ParseError("bad CIDR prefix length: " + std::string(text));
  }
  return c;
}

Ipv4 parse_ipv4(std::string_view text) {
  Ipv4 addr = 0;
  int parts = 0;
  std::size_t start = 0;
  while (parts < 4) {
    const auto dot = text.find('.', start);
    const auto piece = text.substr(
        start, dot == std::string_view::npos ? std::string_view::npos
                                             : dot - start);
    unsigned octet = 0;
    if (!parse_number(piece, octet) || octet > 255) break;
    addr = (addr << 8) | octet;
    ++parts;
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  if (parts != 4 || text.find('.', start) != std::string_view::npos) {
    throw ParseError("bad IPv4 address: " + std::string(text));
  }
  return addr;
}

std::string format_ipv4(Ipv4 addr) {
  return std::to_string(addr >> 24) + "." + std::to_string((addr >> 16) & 255) +
         "." + std::to_string((addr >> 8) & 255) + "." +
         std::to_string(addr & 255);
}

std::string_view proto_name(L4Proto proto) {
  switch (proto) {
    case L4Proto::kTcp:
      return "TCP";
    case L4Proto::kUdp:
      return "UDP";
    case L4Proto::kOther:
      break;
  }
  return "OTHER";
}

bool is_private(Ipv4 addr) {
  static const std::array<Cidr, 5> kPrivate = {
      Cidr::parse("10.0.0.0/8"), Cidr::parse("172.16.0.0/12"),
      Cidr::parse("192.168.0.0/16"), Cidr::parse("127.0.0.0/8"),
      Cidr::parse("169.254.0.0/16")};
  return in_any(addr, kPrivate);
}

const std::vector<Cidr> &default_lan_prefixes() {
  static const std::vector<Cidr> kLan = {Cidr::parse("10.0.0.0/8"),
                                         Cidr::parse("172.16.0.0/12"),
                                         Cidr::parse("192.168.0.0/16")};
  return kLan;
}

std::size_t sort_by_time(std::vector<PacketRecord> &records) {
  std::size_t backwards = 0;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].timestamp_us < records[i - 1].timestamp_us) ++backwards;
  }
  if (backwards > 0) {
    std::stable_sort(records.begin(), records.end(),
                     [](const PacketRecord &a, const PacketRecord &b) {
                       return a.timestamp_us < b.timestamp_us;
                     });
  }
  return backwards;
}

Trace parse_csv_text(std::string_view text, CsvStats *stats) {
  Trace trace;
  CsvStats local;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool seen_header = false;
  bool has_label = false;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!seen_header) {
      seen_header = true;
      if (line.starts_with(kCsvHeader)) {
        const auto rest = line.substr(kCsvHeader.size());
        if (rest == ",label") {
          has_label = true;
        } else if (!rest.empty()) {
          throw ParseError("unexpected header columns", line_no);
        }
        continue;
      }
      // Headerless files are accepted; the label column is inferred per row.
      has_label = true;
    }
    const auto f = split_fields(line);
    if (f.size() != 8 && !(has_label && f.size() == 9)) {
      throw ParseError("expected 8 or 9 fields, got " + std::to_string(f.size()),
                       line_no);
    }
    PacketRecord r;
    int len = 0;
    int dir = 0;
    try {
      r.src_ip = parse_ipv4(f[1]);
      r.dst_ip = parse_ipv4(f[2]);
    } catch (const ParseError &e) {
      throw ParseError(e.what(), line_no);
    }
    if (!parse_number(f[0], r.timestamp_us) ||
        !parse_number(f[3], r.src_port) || !parse_number(f[4], r.dst_port) ||
        !parse_number(f[6], len) || !parse_number(f[7], dir)) {
      throw ParseError("malformed numeric field", line_no);
    }
    if (f[5] == "TCP") {
      r.proto = L4Proto::kTcp;
    } else if (f[5] == "UDP") {
      r.proto = L4Proto::kUdp;
    } else if (f[5] == "OTHER") {
      r.proto = L4Proto::kOther;
    } else {
      throw ParseError("unknown proto '" + std::string(f[5]) + "'", line_no);
    }
    if (len < kMinIpLen || len > kMtu) {
      throw ParseError("ip_total_len " + std::to_string(len) +
                           " outside [20, 1500]",
                       line_no);
    }
    if (dir != 0 && dir != 1) throw ParseError("direction must be 0 or 1", line_no);
    r.ip_total_len = static_cast<std::uint16_t>(len);
    r.direction = static_cast<Direction>(dir);
    if (f.size() == 9 && !f[8].empty()) r.device_label = std::string(f[8]);
    trace.records.push_back(std::move(r));
  }
  local.rows = trace.records.size();
  local.reordered = sort_by_time(trace.records);
  if (stats) *stats = local;
  return trace;
}

Trace parse_csv(const std::filesystem::path &path, CsvStats *stats) {
  return parse_csv_text(read_file(path), stats);
}

std::string write_csv_text(const Trace &trace) {
  const bool labels =
      std::any_of(trace.records.begin(), trace.records.end(),
                  [](const PacketRecord &r) { return r.device_label.has_value(); });
  std::string out(kCsvHeader);
  if (labels) out += ",label";
  out += '\n';
  for (const auto &r : trace.records) {
    out += std::to_string(r.timestamp_us);
    out += ',';
    out += format_ipv4(r.src_ip);
    out += ',';
    out += format_ipv4(r.dst_ip);
    out += ',';
    out += std::to_string(r.src_port);
    out += ',';
    out += std::to_string(r.dst_port);
    out += ',';
    out += proto_name(r.proto);
    out += ',';
    out += std::to_string(r.ip_total_len);
    out += ',';
    out += r.direction == Direction::kLanToWan ? '0' : '1';
    if (labels) {
      out += ',';
      if (r.device_label) out += *r.device_label;
    }
    out += '\n';
  }
  return out;
}

void write_csv(const Trace &trace, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << write_csv_text(trace);
  if (!out) throw IoError("write failed: " + path.string());
}

Trace parse_pcap(const std::filesystem::path &path,
                 std::span<const Cidr> lan_prefixes, PcapStats *stats) {
  if (lan_prefixes.empty()) {
    throw ConfigError("parse_pcap needs at least one LAN prefix");
  }
  const std::string data = read_file(path);
  const auto *p = reinterpret_cast<const unsigned char *>(data.data());
  if (data.size() < 24) throw ParseError("pcap too short for global header");

  std::uint32_t magic;
  std::memcpy(&magic, p, 4);
  bool swap = false;
  bool nanos = false;
  switch (magic) {
    case 0xa1b2c3d4u:
      break;
    case 0xd4c3b2a1u:
      swap = true;
      break;
    case 0xa1b23c4du:
      nanos = true;
      break;
    case 0x4d3cb2a1u:
      swap = nanos = true;
      break;
    default:
      throw ParseError("not a pcap file: " + path.string());
  }
  const std::uint32_t linktype = read_u32(p + 20, swap);
  if (linktype != 1) {
    throw ParseError("unsupported link type " + std::to_string(linktype));
  }

  Trace trace;
  PcapStats local;
  std::optional<std::int64_t> first_us;
  std::size_t off = 24;
  while (off + 16 <= data.size()) {
    const std::int64_t sec = read_u32(p + off, swap);
    const std::int64_t frac = read_u32(p + off + 4, swap);
    const std::uint32_t caplen = read_u32(p + off + 8, swap);
    off += 16;
    if (off + caplen > data.size()) throw ParseError("truncated pcap record");
    const unsigned char *frame = p + off;
    off += caplen;
    ++local.frames;

    const std::int64_t ts = sec * 1000000 + (nanos ? frac / 1000 : frac);
    if (!first_us) first_us = ts;

    if (caplen < 14 + 20 || be16(frame + 12) != 0x0800) {
      ++local.skipped;
      continue;
    }
    const unsigned char *ip = frame + 14;
    const std::size_t ip_cap = caplen - 14;
    const int ihl = (ip[0] & 0x0f) * 4;
    if ((ip[0] >> 4) != 4 || ihl < 20 || static_cast<std::size_t>(ihl) > ip_cap) {
      ++local.skipped;
      continue;
    }
    const int total_len = be16(ip + 2);
    if (total_len < kMinIpLen || total_len > kMtu) {
      ++local.skipped;
      continue;
    }
    PacketRecord r;
    r.timestamp_us = ts - *first_us;
    r.ip_total_len = static_cast<std::uint16_t>(total_len);
    r.src_ip = be32(ip + 12);
    r.dst_ip = be32(ip + 16);
    const int proto = ip[9];
    r.proto = proto == 6 ? L4Proto::kTcp
                         : (proto == 17 ? L4Proto::kUdp : L4Proto::kOther);
    const bool first_fragment = (be16(ip + 6) & 0x1fff) == 0;
    if (r.proto != L4Proto::kOther && first_fragment &&
        static_cast<std::size_t>(ihl) + 4 <= ip_cap && ihl + 4 <= total_len) {
      r.src_port = be16(ip + ihl);
      r.dst_port = be16(ip + ihl + 2);
    }
    r.direction = in_any(r.src_ip, lan_prefixes) ? Direction::kLanToWan
                                                 : Direction::kWanToLan;
    trace.records.push_back(std::move(r));
  }
  trace.epoch_us = first_us.value_or(0);
  sort_by_time(trace.records);
  if (stats) *stats = local;
  return trace;
}

void write_pcap(const Trace &trace, const std::filesystem::path &path) {
  std::string out;
  put_le32(out, 0xa1b2c3d4u);
  out.push_back(2);
  out.push_back(0);
  out.push_back(4);
  out.push_back(0);
  put_le32(out, 0);
  put_le32(out, 0);
  put_le32(out, 65535);
  put_le32(out, 1);
  for (const auto &r : trace.records) {
    const std::int64_t ts = trace.epoch_us + r.timestamp_us;
    const std::uint32_t caplen = 14u + r.ip_total_len;
    put_le32(out, static_cast<std::uint32_t>(ts / 1000000));
    put_le32(out, static_cast<std::uint32_t>(ts % 1000000));
    put_le32(out, caplen);
    put_le32(out, caplen);
    std::string frame(caplen, '\0');
    auto *f = reinterpret_cast<unsigned char *>(frame.data());
    put_be16(f + 12, 0x0800);
    unsigned char *ip = f + 14;
    ip[0] = 0x45;
    put_be16(ip + 2, r.ip_total_len);
    ip[8] = 64;
    ip[9] = r.proto == L4Proto::kTcp ? 6 : (r.proto == L4Proto::kUdp ? 17 : 0);
    put_be32(ip + 12, r.src_ip);
    put_be32(ip + 16, r.dst_ip);
    if (r.proto != L4Proto::kOther && r.ip_total_len >= 24) {
      put_be16(ip + 20, r.src_port);
      put_be16(ip + 22, r.dst_port);
    }
    out += frame;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write " + path.string());
  file << out;
}

Trace filter_isp_visible(const Trace &trace,
                         std::span<const Cidr> lan_prefixes) {
  Trace out;
  out.epoch_us = trace.epoch_us;
  for (const auto &r : trace.records) {
    const bool udp = r.proto == L4Proto::kUdp;
    const auto either_port = [&r](std::uint16_t port) {
      return r.src_port == port || r.dst_port == port;
    };
    if (udp && (either_port(67) || either_port(68))) continue;  // DHCP
    if (udp && either_port(1900)) continue;                     // SSDP
    if (udp && either_port(5353)) continue;                     // mDNS
    if (r.proto != L4Proto::kOther) {
      // DNS answered inside the LAN: the resolver side is private.
      if (r.dst_port == 53 && is_private(r.dst_ip)) continue;
      if (r.src_port == 53 && is_private(r.src_ip)) continue;
    }
    if (in_any(r.src_ip, lan_prefixes) && in_any(r.dst_ip, lan_prefixes)) {
      continue;
    }
    out.records.push_back(r);
  }
  return out;
}

Trace filter_isp_visible(const Trace &trace) {
  return filter_isp_visible(trace, default_lan_prefixes());
}

}  // namespace iotfp
