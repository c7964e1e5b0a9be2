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

// Offline model construction for one device:
//
//   embedding -> matrix -> key packets -> labelled windows -> features
//   -> 4:3:3 split -> real-valued and quantized trees
//
// Every failure is rethrown as a StageError naming the stage.

#ifndef IOTFP_PIPELINE_H_
#define IOTFP_PIPELINE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "iotfp/harness.h"
#include "iotfp/model.h"
#include "iotfp/table_compiler.h"

namespace iotfp {

struct PipelineConfig {
  std::string device_id;
  TrainingConfig embedding;
  ExtractionConfig extraction;
  double lambda = kDefaultLambda;
  std::size_t min_freq = kDefaultMinFreq;
  std::size_t n_keys = 16;
  std::int64_t t_w_us = kDefaultWindowUs;
  std::size_t max_leaves = kMaxLeaves;
  std::uint64_t split_seed = 1;
  // Only used when no labelled mix is supplied.
  MixConfig mix;
  bool keep_embedding = false;
};

struct TrainSummary {
  std::size_t vocab = 0;           // matrix rows
  std::size_t key_candidates = 0;  // periodic sizes inside the vocabulary
  std::size_t n_keys = 0;
  bool shortfall = false;
  std::size_t windows = 0;
  std::size_t positive_windows = 0;
  std::size_t leaves = 0;
  std::size_t quantized_leaves = 0;
  Confusion train, val;  // quantized tree, i.e. what the switch runs
  Confusion train_float, val_float;
  Split split;
  std::vector<int> labels;  // per window of the labelled mix

  std::string to_text() const;
};

// Keys for the feature vector: periodic sizes restricted to sizes the
// matrix knows, then the N with the shortest period.
TopKeys choose_keys(const KeyPacketSet &set, const NeighborProbMatrix &matrix,
                    std::size_t n, std::size_t *candidates = nullptr);

std::vector<Sample> float_samples(const Trace &trace, std::span<const Window> windows,
                                  std::span<const int> labels,
                                  const DeviceFingerprintModel &model);

// Features as the data plane accumulates them: sums of 8-bit rows.
std::vector<Sample> quantized_samples(const Trace &trace,
                                      std::span<const Window> windows,
                                      std::span<const int> labels,
                                      const ProbabilityTable &table);

// `device` is the device's own capture, `background` feeds the negative
// sampler (the device capture stands in when it is empty) and `mix` is a
// labelled trace to cut training windows from. When `mix` is null the device
// and background are mixed with cfg.mix. Unlabelled device packets are
// labelled with cfg.device_id.
DeviceFingerprintModel train_device_model(const Trace &device,
                                          const Trace &background,
                                          const Trace *mix,
                                          const PipelineConfig &cfg,
                                          TrainSummary *summary = nullptr);

}  // namespace iotfp

#endif  // IOTFP_PIPELINE_H_
