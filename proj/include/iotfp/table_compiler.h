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

// Lowers a DeviceFingerprintModel into switch-style match-action tables:
//
//   directional_packet_size  exact on direction   -> dir_size offset
//   packet_size_to_prob      exact on dir_size    -> N 8-bit probabilities
//   stateful_update          register layout only (N x 32-bit per slot)
//   node                     exact on timeout, range on v_1..v_N -> label
//
// Probabilities are scaled to [0, 255] and rounded down, so every entry is
// within 1/255 of the real value and one packet adds at most 255 per
// dimension to a 32-bit register.

#ifndef IOTFP_TABLE_COMPILER_H_
#define IOTFP_TABLE_COMPILER_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "iotfp/fingerprint.h"
#include "iotfp/model.h"

namespace iotfp {

inline constexpr std::uint32_t kDefaultIpSize = 65536;
inline constexpr int kQuantScale = 255;

// floor(p * 255). Throws ContractError unless 0 <= p <= 1.
std::uint8_t quantize_prob(double p);

struct DirectionRule {
  Direction direction = Direction::kLanToWan;
  std::uint16_t offset = 0;

  friend bool operator==(const DirectionRule &, const DirectionRule &) = default;
};

struct ProbabilityTable {
  // dir_size -> N quantized probabilities; a miss yields the zero row.
  std::map<int, std::vector<std::uint8_t>> rows;
  std::size_t dims = 0;

  friend bool operator==(const ProbabilityTable &,
                         const ProbabilityTable &) = default;
};

struct InferenceRule {
  int priority = 0;
  // Inclusive [lo, hi] per feature dimension.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges;
  int label = 0;

  bool matches(std::span<const std::uint32_t> v) const;

  friend bool operator==(const InferenceRule &, const InferenceRule &) = default;
};

struct RegisterSpec {
  int width_bits = 32;
  std::size_t dims = 0;
  std::uint32_t ip_slots = kDefaultIpSize;

  friend bool operator==(const RegisterSpec &, const RegisterSpec &) = default;
};

struct CompiledTableSet {
  std::string device_id;
  std::int64_t t_w_us = kDefaultWindowUs;
  std::vector<DirectionalSize> keys;
  std::array<DirectionRule, 2> direction_rules{};
  ProbabilityTable probability;
  std::vector<InferenceRule> inference_rules;
  RegisterSpec register_spec;

  std::size_t dims() const { return register_spec.dims; }

  friend bool operator==(const CompiledTableSet &,
                         const CompiledTableSet &) = default;
};

ProbabilityTable compile_probability_table(const DeviceFingerprintModel &model);

// One rule per leaf, in leaf order. The tree must split on integer-valued
// features: "v[j] <= t" becomes hi = floor(t) on the left branch and
// lo = floor(t) + 1 on the right. Throws CompileError above 500 leaves.
std::vector<InferenceRule> tree_to_rules(const DecisionTree &tree);

// Index of the first rule matching v, or -1.
int match_rules(std::span<const InferenceRule> rules,
                std::span<const std::uint32_t> v);

struct CompileOptions {
  std::uint32_t ip_size = kDefaultIpSize;
};

// Uses the model's quantized tree. Throws CompileError.
CompiledTableSet compile(const DeviceFingerprintModel &model,
                         const CompileOptions &opts = {});

// Sum of quantized probability rows, modulo 2^32: the value the data plane
// registers hold after a window of `packets`.
std::vector<std::uint32_t> quantized_feature_vector(
    std::span<const DirectionalSize> packets, const ProbabilityTable &table);

// Text export, one rule per line:
//   table=<name> priority=<k> match=<field>:<lo>..<hi>,... action=<name>(<args>)
// preceded by "# key=value" header lines carrying the table-set metadata.
std::string rules_to_string(const CompiledTableSet &set);
CompiledTableSet rules_from_string(const std::string &text);  // ParseError

void save_rules(const CompiledTableSet &set, const std::filesystem::path &path);
CompiledTableSet load_rules(const std::filesystem::path &path);

}  // namespace iotfp

#endif  // IOTFP_TABLE_COMPILER_H_
