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

// Per-device fingerprint model and its on-disk JSON form.

#ifndef IOTFP_MODEL_H_
#define IOTFP_MODEL_H_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iotfp/embedding.h"
#include "iotfp/fingerprint.h"
#include "iotfp/key_packets.h"
#include "iotfp/neighbor_matrix.h"

namespace iotfp {

inline constexpr int kModelFormatVersion = 1;

struct DeviceFingerprintModel {
  std::string device_id;
  std::int64_t t_w_us = kDefaultWindowUs;
  std::vector<KeyPacket> key_packets;  // the N feature keys, in order
  NeighborProbMatrix matrix;
  DecisionTree tree;            // trained on real-valued features
  DecisionTree quantized_tree;  // trained on 8-bit accumulated features
  TrainingConfig embedding_cfg;
  ExtractionConfig extraction_cfg;
  std::size_t n_keys = 16;
  std::optional<EmbeddingTable> embedding;

  std::vector<DirectionalSize> keys() const;
  std::size_t dim() const { return key_packets.size(); }
};

// Structured text (JSON). Doubles are written in shortest round-trip form,
// so save -> load -> save is byte-stable.
std::string model_to_string(const DeviceFingerprintModel &model);
DeviceFingerprintModel model_from_string(const std::string &text);

void save_model(const DeviceFingerprintModel &model,
                const std::filesystem::path &path);
// Throws IoError / ParseError.
DeviceFingerprintModel load_model(const std::filesystem::path &path);

std::string embedding_to_string(const EmbeddingTable &table,
                                const TrainingConfig &cfg);
EmbeddingTable embedding_from_string(const std::string &text,
                                     TrainingConfig *cfg = nullptr);

}  // namespace iotfp

#endif  // IOTFP_MODEL_H_
