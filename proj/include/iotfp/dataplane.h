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

// Software model of the fingerprinting pipeline as it runs on a PISA switch.
//
// Per packet, in pipeline order:
//   1. direction table: dir_size = totalLen + offset[direction]
//   2. window check: if tstamp - window_start >= T_w (unsigned 32-bit), set
//      timeout, snapshot the registers, run the inference table and reset
//      the host's slot; the packet then opens the next window
//   3. probability table: exact match on dir_size, miss -> zero row
//   4. stateful update: registers[slot][j] += prob[j] (mod 2^32)
//
// Everything on this path is integer arithmetic.

#ifndef IOTFP_DATAPLANE_H_
#define IOTFP_DATAPLANE_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iotfp/table_compiler.h"
#include "iotfp/trace.h"

namespace iotfp {

inline constexpr std::size_t kMaxDims = 64;

// Which window the packet that trips the timeout belongs to.
enum class TriggerPolicy { kOpensWindow, kClosesWindow };

struct PacketMetadata {
  std::uint16_t dir_size = 0;
  std::array<std::uint8_t, kMaxDims> prob{};
  std::array<std::uint32_t, kMaxDims> v{};
  std::uint32_t tstamp = 0;
  std::uint8_t timeout = 0;
  std::uint32_t label = 0;
};

struct Detection {
  std::string device_id;
  Ipv4 ip_key = 0;
  std::int64_t window_start_us = 0;
  int label = 0;
  std::vector<std::uint32_t> v;

  friend bool operator==(const Detection &, const Detection &) = default;
};

// Host index: CRC-16/CCITT-FALSE of the big-endian address, mod ip_slots.
std::uint32_t host_slot(Ipv4 host, std::uint32_t ip_slots);

class RegisterBank {
 public:
  RegisterBank(const RegisterSpec &spec);

  const RegisterSpec &spec() const { return spec_; }
  std::span<const std::uint32_t> cells(std::uint32_t slot) const {
    return std::span<const std::uint32_t>(cells_).subspan(
        static_cast<std::size_t>(slot) * spec_.dims, spec_.dims);
  }
  bool active(std::uint32_t slot) const { return active_[slot] != 0; }
  std::uint32_t window_start(std::uint32_t slot) const {
    return window_start_[slot];
  }

 private:
  friend class DataPlane;

  RegisterSpec spec_;
  std::vector<std::uint32_t> cells_;         // ip_slots x dims
  std::vector<std::uint32_t> window_start_;  // 32-bit switch timestamps
  std::vector<std::uint8_t> active_;
  // Simulator bookkeeping, never consulted by the match-action logic.
  std::vector<Ipv4> owner_;
  std::vector<std::int64_t> window_start_us_;
  std::vector<std::uint64_t> shadow_;  // debug: independent per-window sums
};

struct SimOptions {
  TriggerPolicy trigger = TriggerPolicy::kOpensWindow;
  // Re-derives each closed window's registers from the probability rows and
  // throws ContractError on any mismatch.
  bool debug_check = false;
};

struct SimStats {
  std::uint64_t packets = 0;
  std::uint64_t prob_hits = 0;
  std::uint64_t prob_misses = 0;
  std::uint64_t collisions = 0;  // packets landing in a slot owned by another host
  std::uint64_t detections = 0;
  double seconds = 0;

  double packets_per_second() const {
    return seconds > 0 ? static_cast<double>(packets) / seconds : 0.0;
  }
  SimStats &operator+=(const SimStats &o);
};

// One device's logical pipeline: the compiled tables laid out for O(1)
// lookup. Immutable after construction; state lives in a RegisterBank.
class DataPlane {
 public:
  explicit DataPlane(CompiledTableSet tables, SimOptions opts = {});

  const CompiledTableSet &tables() const { return tables_; }
  RegisterBank make_bank() const { return RegisterBank(tables_.register_spec); }

  std::optional<Detection> process_packet(const PacketRecord &record,
                                          RegisterBank &bank,
                                          SimStats &stats) const;

  // Evaluates and resets every active slot whose window has run for at
  // least T_w by now_us. Ordered by (window start, host).
  std::vector<Detection> flush(RegisterBank &bank, std::int64_t now_us,
                               SimStats &stats) const;

  // Label the inference table assigns to v (0 on a table miss).
  int infer(std::span<const std::uint32_t> v) const;

 private:
  Detection close_window(RegisterBank &bank, std::uint32_t slot) const;
  void check_bank(const RegisterBank &bank) const;

  CompiledTableSet tables_;
  SimOptions opts_;
  std::size_t dims_;
  std::array<std::uint16_t, 2> dir_offset_{};
  std::uint32_t t_w_;
  std::vector<std::uint8_t> prob_flat_;  // (kNumDirSizes + 1) x dims
  std::vector<std::uint8_t> prob_hit_;   // kNumDirSizes + 1
};

struct DeviceDetections {
  std::string device_id;
  std::vector<Detection> detections;
  SimStats stats;
};

struct RunOptions {
  SimOptions sim;
  unsigned jobs = 1;
  // Close all windows still open at the end of the trace.
  bool flush_at_end = true;
};

struct RunResult {
  std::vector<DeviceDetections> devices;  // same order as the table sets
  SimStats total;
};

// Every packet traverses each device's pipeline; banks are independent.
RunResult run_trace(const Trace &trace,
                    std::span<const CompiledTableSet> table_sets,
                    const RunOptions &opts = {});

// device_id,ip_key,window_start_us,label,v_0..v_{N-1}
std::string detections_to_csv(std::span<const DeviceDetections> devices);
void write_detections(std::span<const DeviceDetections> devices,
                      const std::filesystem::path &path);
// Reads the first four columns back; the feature snapshot is kept when
// present.
std::vector<Detection> read_detections(const std::filesystem::path &path);
std::vector<Detection> parse_detections(const std::string &text);

std::string stats_summary(const RunResult &result);

}  // namespace iotfp

#endif  // IOTFP_DATAPLANE_H_
