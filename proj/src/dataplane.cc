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

#include "iotfp/dataplane.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>
#include <type_traits>

#include <boost/crc.hpp>

#include "iotfp/errors.h"

namespace iotfp {

static_assert(std::is_integral_v<decltype(PacketMetadata::dir_size)>);
static_assert(std::is_integral_v<decltype(PacketMetadata::tstamp)>);
static_assert(std::is_integral_v<decltype(PacketMetadata::timeout)>);
static_assert(std::is_integral_v<decltype(PacketMetadata::label)>);
static_assert(std::is_integral_v<decltype(PacketMetadata::prob)::value_type>);
static_assert(std::is_integral_v<decltype(PacketMetadata::v)::value_type>);

std::uint32_t host_slot(Ipv4 host, std::uint32_t ip_slots) {
  const unsigned char bytes[4] = {
      static_cast<unsigned char>(host >> 24), static_cast<unsigned char>(host >> 16),
      static_cast<unsigned char>(host >> 8), static_cast<unsigned char>(host)};
  boost::crc_optimal<16, 0x1021, 0xFFFF, 0, false, false> crc;
  crc.process_bytes(bytes, sizeof(bytes));
  return static_cast<std::uint32_t>(crc.checksum()) % ip_slots;
}

RegisterBank::RegisterBank(const RegisterSpec &spec) : spec_(spec) {
  if (spec.width_bits != 32) throw ContractError("registers are 32 bits wide");
  if (spec.ip_slots == 0) throw ContractError("register bank needs slots");
  const std::size_t slots = spec.ip_slots;
  cells_.assign(slots * spec.dims, 0);
  window_start_.assign(slots, 0);
  active_.assign(slots, 0);
  owner_.assign(slots, 0);
  window_start_us_.assign(slots, 0);
}

SimStats &SimStats::operator+=(const SimStats &o) {
  packets += o.packets;
  prob_hits += o.prob_hits;
  prob_misses += o.prob_misses;
  collisions += o.collisions;
  detections += o.detections;
  seconds += o.seconds;
  return *this;
}

DataPlane::DataPlane(CompiledTableSet tables, SimOptions opts)
    : tables_(std::move(tables)), opts_(opts), dims_(tables_.dims()) {
  if (dims_ == 0 || dims_ > kMaxDims) {
    throw ContractError("table set dimension must lie in [1, 64]");
  }
  if (tables_.register_spec.width_bits != 32 || tables_.register_spec.ip_slots == 0) {
    throw ContractError("register spec must be 32 bits wide with slots");
  }
  if (tables_.probability.dims != dims_ || tables_.keys.size() != dims_) {
    throw ContractError("probability table dimension mismatch");
  }
  for (const auto &rule : tables_.inference_rules) {
    if (rule.ranges.size() != dims_) {
      throw ContractError("inference rule dimension mismatch");
    }
  }
  if (tables_.t_w_us <= 0 || tables_.t_w_us > 0xffffffffLL) {
    throw ContractError("window length must fit 32 bits");
  }
  t_w_ = static_cast<std::uint32_t>(tables_.t_w_us);
  for (const auto &r : tables_.direction_rules) {
    dir_offset_[static_cast<int>(r.direction)] = r.offset;
  }
  prob_flat_.assign((kNumDirSizes + 1) * dims_, 0);
  prob_hit_.assign(kNumDirSizes + 1, 0);
  for (const auto &[size, row] : tables_.probability.rows) {
    if (size < 0 || size > kNumDirSizes || row.size() != dims_) {
      throw ContractError("probability row out of range");
    }
    std::copy(row.begin(), row.end(),
              prob_flat_.begin() + static_cast<std::ptrdiff_t>(size * dims_));
    prob_hit_[size] = 1;
  }
}

void DataPlane::check_bank(const RegisterBank &bank) const {
  if (bank.spec_.dims != dims_ ||
      bank.spec_.ip_slots != tables_.register_spec.ip_slots) {
    throw ContractError("register bank does not match the table set");
  }
}

int DataPlane::infer(std::span<const std::uint32_t> v) const {
  const int i = match_rules(tables_.inference_rules, v);
  return i < 0 ? 0 : tables_.inference_rules[i].label;
}

Detection DataPlane::close_window(RegisterBank &bank, std::uint32_t slot) const {
  std::uint32_t *cells = bank.cells_.data() + static_cast<std::size_t>(slot) * dims_;
  Detection d;
  d.device_id = tables_.device_id;
  d.ip_key = bank.owner_[slot];
  d.window_start_us = bank.window_start_us_[slot];
  d.v.assign(cells, cells + dims_);
  d.label = infer(d.v);
  if (opts_.debug_check) {
    std::uint64_t *shadow = bank.shadow_.data() + static_cast<std::size_t>(slot) * dims_;
    for (std::size_t j = 0; j < dims_; ++j) {
      if (static_cast<std::uint32_t>(shadow[j]) != cells[j]) {
        throw ContractError("register snapshot disagrees with the window's "
                            "probability rows");
      }
      shadow[j] = 0;
    }
  }
  std::fill(cells, cells + dims_, 0u);
  return d;
}

std::optional<Detection> DataPlane::process_packet(const PacketRecord &record,
                                                   RegisterBank &bank,
                                                   SimStats &stats) const {
  check_bank(bank);
  ++stats.packets;
  PacketMetadata meta;
  std::optional<Detection> out;

  // directional_packet_size
  meta.dir_size = static_cast<std::uint16_t>(
      record.ip_total_len + dir_offset_[static_cast<std::size_t>(record.direction)]);
  meta.tstamp = static_cast<std::uint32_t>(record.timestamp_us);

  const Ipv4 host = host_address(record);
  const std::uint32_t slot = host_slot(host, tables_.register_spec.ip_slots);
  const auto open_slot = [&] {
    bank.active_[slot] = 1;
    bank.window_start_[slot] = meta.tstamp;
    bank.owner_[slot] = host;
    bank.window_start_us_[slot] = record.timestamp_us;
  };
  const auto timed_out = [&] {
    return static_cast<std::uint32_t>(meta.tstamp - bank.window_start_[slot]) >= t_w_;
  };
  const auto fire = [&] {
    meta.timeout = 1;
    out = close_window(bank, slot);
    meta.label = static_cast<std::uint32_t>(out->label);
    ++stats.detections;
  };

  if (!bank.active_[slot]) {
    open_slot();
  } else {
    if (bank.owner_[slot] != host) ++stats.collisions;
    if (opts_.trigger == TriggerPolicy::kOpensWindow && timed_out()) {
      fire();
      open_slot();
    }
  }

  // packet_size_to_prob
  const std::size_t row = meta.dir_size;
  if (row <= static_cast<std::size_t>(kNumDirSizes) && prob_hit_[row]) {
    ++stats.prob_hits;
    std::copy_n(prob_flat_.data() + row * dims_, dims_, meta.prob.data());
  } else {
    ++stats.prob_misses;
  }

  // stateful_update
  std::uint32_t *cells = bank.cells_.data() + static_cast<std::size_t>(slot) * dims_;
  for (std::size_t j = 0; j < dims_; ++j) {
    cells[j] += meta.prob[j];
    meta.v[j] = cells[j];
  }
  if (opts_.debug_check) {
    if (bank.shadow_.empty()) bank.shadow_.assign(bank.cells_.size(), 0);
    const auto it = tables_.probability.rows.find(meta.dir_size);
    if (it != tables_.probability.rows.end()) {
      std::uint64_t *shadow = bank.shadow_.data() + static_cast<std::size_t>(slot) * dims_;
      for (std::size_t j = 0; j < dims_; ++j) shadow[j] += it->second[j];
    }
  }

  if (opts_.trigger == TriggerPolicy::kClosesWindow && timed_out()) {
    fire();
    open_slot();
  }
  return out;
}

std::vector<Detection> DataPlane::flush(RegisterBank &bank, std::int64_t now_us,
                                        SimStats &stats) const {
  check_bank(bank);
  std::vector<Detection> out;
  for (std::uint32_t slot = 0; slot < bank.spec_.ip_slots; ++slot) {
    if (!bank.active_[slot]) continue;
    if (now_us - bank.window_start_us_[slot] < tables_.t_w_us) continue;
    out.push_back(close_window(bank, slot));
    bank.active_[slot] = 0;
    ++stats.detections;
  }
  std::sort(out.begin(), out.end(), [](const Detection &a, const Detection &b) {
    if (a.window_start_us != b.window_start_us) {
      return a.window_start_us < b.window_start_us;
    }
    return a.ip_key < b.ip_key;
  });
  return out;
}

RunResult run_trace(const Trace &trace,
                    std::span<const CompiledTableSet> table_sets,
                    const RunOptions &opts) {
  RunResult result;
  result.devices.resize(table_sets.size());
  const auto run_one = [&](std::size_t i) {
    const DataPlane dp(table_sets[i], opts.sim);
    auto bank = dp.make_bank();
    auto &out = result.devices[i];
    out.device_id = table_sets[i].device_id;
    const auto start = std::chrono::steady_clock::now();
    for (const auto &r : trace.records) {
      if (auto d = dp.process_packet(r, bank, out.stats)) {
        out.detections.push_back(std::move(*d));
      }
    }
    if (opts.flush_at_end && !trace.empty()) {
      const auto now = trace.records.back().timestamp_us + table_sets[i].t_w_us;
      for (auto &d : dp.flush(bank, now, out.stats)) {
        out.detections.push_back(std::move(d));
      }
    }
    out.stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
  };

  const unsigned jobs = std::max(1u, opts.jobs);
  if (jobs == 1 || table_sets.size() <= 1) {
    for (std::size_t i = 0; i < table_sets.size(); ++i) run_one(i);
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (unsigned w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < table_sets.size(); i += jobs) run_one(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto &t : workers) t.join();
    for (auto &e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  for (const auto &d : result.devices) result.total += d.stats;
  return result;
}

std::string detections_to_csv(std::span<const DeviceDetections> devices) {
  std::size_t max_dims = 0;
  for (const auto &dev : devices) {
    for (const auto &d : dev.detections) max_dims = std::max(max_dims, d.v.size());
  }
  std::ostringstream out;
  out << "device_id,ip_key,window_start_us,label";
  for (std::size_t j = 0; j < max_dims; ++j) out << ",v_" << j;
  out << "\n";
  for (const auto &dev : devices) {
    for (const auto &d : dev.detections) {
      out << d.device_id << "," << format_ipv4(d.ip_key) << ","
          << d.window_start_us << "," << d.label;
      for (std::size_t j = 0; j < max_dims; ++j) {
        out << ",";
        if (j < d.v.size()) out << d.v[j];
      }
      out << "\n";
    }
  }
  return out.str();
}

void write_detections(std::span<const DeviceDetections> devices,
                      const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << detections_to_csv(devices);
}

std::vector<Detection> parse_detections(const std::string &text) {
  std::vector<Detection> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.starts_with("device_id,")) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    while (true) {
      const auto pos = rest.find(',');
      f.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (f.size() < 4) throw ParseError("detection row needs 4 columns", line_no);
    Detection d;
    d.device_id = std::string(f[0]);
    try {
      d.ip_key = parse_ipv4(f[1]);
    } catch (const ParseError &e) {
      throw ParseError(e.what(), line_no);
    }
    const auto num = [line_no](std::string_view s, auto &v) {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
        throw ParseError("bad number '" + std::string(s) + "'", line_no);
      }
    };
    num(f[2], d.window_start_us);
    num(f[3], d.label);
    for (std::size_t j = 4; j < f.size(); ++j) {
      if (f[j].empty()) continue;
      std::uint32_t x = 0;
      num(f[j], x);
      d.v.push_back(x);
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Detection> read_detections(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_detections(ss.str());
}

std::string stats_summary(const RunResult &result) {
  std::ostringstream out;
  for (const auto &d : result.devices) {
    std::uint64_t positives = 0;
    for (const auto &det : d.detections) positives += det.label == 1;
    out << "device=" << d.device_id << " packets=" << d.stats.packets
        << " prob_hits=" << d.stats.prob_hits
        << " prob_misses=" << d.stats.prob_misses
        << " collisions=" << d.stats.collisions
        << " windows=" << d.detections.size() << " positive=" << positives
        << " pps=" << static_cast<std::uint64_t>(d.stats.packets_per_second())
        << "\n";
  }
  out << "total packets=" << result.total.packets
      << " collisions=" << result.total.collisions
      << " detections=" << result.total.detections
      << " seconds=" << result.total.seconds << "\n";
  return out.str();
}

}  // namespace iotfp
