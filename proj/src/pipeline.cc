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

#include "iotfp/pipeline.h"

#include <sstream>
#include <utility>

#include "iotfp/errors.h"

namespace iotfp {

namespace {

template <typename F>
auto stage(const char *name, F &&f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError &) {
    throw;
  } catch (const std::exception &e) {
    throw StageError(name, e.what());
  }
}

std::string fmt_ratio(const std::optional<double> &x) {
  if (!x) return "undefined";
  std::ostringstream s;
  s.precision(4);
  s << *x;
  return s.str();
}

std::string fmt_confusion(const Confusion &c) {
  return "precision=" + fmt_ratio(c.precision()) +
         " recall=" + fmt_ratio(c.recall()) + " fpr=" + fmt_ratio(c.fpr()) +
         " (tp=" + std::to_string(c.tp) + " fp=" + std::to_string(c.fp) +
         " tn=" + std::to_string(c.tn) + " fn=" + std::to_string(c.fn) + ")";
}

Confusion score(const DecisionTree &tree, std::span<const Sample> samples,
                std::span<const std::size_t> idx) {
  std::vector<int> pred, truth;
  pred.reserve(idx.size());
  truth.reserve(idx.size());
  for (auto i : idx) {
    pred.push_back(tree.predict(samples[i].v));
    truth.push_back(samples[i].label);
  }
  return confusion(pred, truth);
}

std::vector<Sample> subset(std::span<const Sample> samples,
                           std::span<const std::size_t> idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(samples[i]);
  return out;
}

}  // namespace

std::string TrainSummary::to_text() const {
  std::ostringstream s;
  s << "vocab=" << vocab << " key_candidates=" << key_candidates
    << " n_keys=" << n_keys << (shortfall ? " (shortfall)" : "") << "\n"
    << "windows=" << windows << " positive=" << positive_windows
    << " split=" << split.train.size() << "/" << split.val.size() << "/"
    << split.test.size() << "\n"
    << "leaves=" << leaves << " quantized_leaves=" << quantized_leaves << "\n"
    << "train " << fmt_confusion(train) << "\n"
    << "val   " << fmt_confusion(val) << "\n";
  return s.str();
}

TopKeys choose_keys(const KeyPacketSet &set, const NeighborProbMatrix &matrix,
                    std::size_t n, std::size_t *candidates) {
  KeyPacketSet known;
  for (const auto &e : set.entries) {
    if (matrix.index_of(e.size) >= 0) known.entries.push_back(e);
  }
  if (candidates) *candidates = known.entries.size();
  return select_top_n(known, n);
}

std::vector<Sample> float_samples(const Trace &trace, std::span<const Window> windows,
                                  std::span<const int> labels,
                                  const DeviceFingerprintModel &model) {
  const auto keys = model.keys();
  std::vector<Sample> out;
  out.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto sizes = window_sizes(trace, windows[i]);
    out.push_back({build_feature_vector(sizes, model.matrix, keys).v, labels[i]});
  }
  return out;
}

std::vector<Sample> quantized_samples(const Trace &trace,
                                      std::span<const Window> windows,
                                      std::span<const int> labels,
                                      const ProbabilityTable &table) {
  std::vector<Sample> out;
  out.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto sizes = window_sizes(trace, windows[i]);
    const auto q = quantized_feature_vector(sizes, table);
    out.push_back({std::vector<double>(q.begin(), q.end()), labels[i]});
  }
  return out;
}

DeviceFingerprintModel train_device_model(const Trace &device,
                                          const Trace &background,
                                          const Trace *mix,
                                          const PipelineConfig &cfg,
                                          TrainSummary *summary) {
  if (cfg.device_id.empty()) throw StageError("config", "device id is empty");
  stage("config", [&] {
    cfg.embedding.validate();
    cfg.extraction.validate();
    if (cfg.n_keys == 0 || cfg.n_keys > kMaxDims) {
      throw ConfigError("n_keys must lie in [1, 64]");
    }
    if (cfg.t_w_us <= 0) throw ConfigError("window length must be positive");
    if (cfg.max_leaves == 0 || cfg.max_leaves > kMaxLeaves) {
      throw ConfigError("max_leaves must lie in [1, 500]");
    }
  });
  if (device.empty()) throw StageError("input", "device trace is empty");

  DeviceFingerprintModel model;
  model.device_id = cfg.device_id;
  model.t_w_us = cfg.t_w_us;
  model.embedding_cfg = cfg.embedding;
  model.extraction_cfg = cfg.extraction;
  model.n_keys = cfg.n_keys;

  const auto table = stage("embedding", [&] {
    return train_embedding(device, background.empty() ? device : background,
                           cfg.embedding);
  });
  model.matrix = stage("matrix", [&] {
    return build_matrix(table, device, cfg.lambda, cfg.min_freq);
  });
  if (cfg.keep_embedding) model.embedding = table;

  TrainSummary s;
  s.vocab = model.matrix.n();
  stage("key_packets", [&] {
    const auto set = extract_key_packets(device, cfg.extraction);
    const auto top = choose_keys(set, model.matrix, cfg.n_keys, &s.key_candidates);
    s.shortfall = top.shortfall;
    for (const auto k : top.keys) {
      for (const auto &e : set.entries) {
        if (e.size == k) model.key_packets.push_back(e);
      }
    }
  });
  s.n_keys = model.key_packets.size();

  Trace mixed;
  const Trace *source = mix;
  if (!source) {
    mixed = stage("mix", [&] {
      Trace own = device;
      for (auto &r : own.records) {
        if (!r.device_label) r.device_label = cfg.device_id;
      }
      const Trace one[] = {std::move(own)};
      return mix_traces(one, background, cfg.mix);
    });
    source = &mixed;
  }

  const auto windows = stage("windows", [&] {
    auto w = windowize(*source, cfg.t_w_us);
    if (w.empty()) throw EmptyModelError("no windows in the labelled trace");
    return w;
  });
  s.labels = window_labels(*source, windows, cfg.device_id);
  s.windows = windows.size();
  for (int y : s.labels) s.positive_windows += y;

  const auto prob = compile_probability_table(model);
  const auto fsamples = stage("features", [&] {
    return float_samples(*source, windows, s.labels, model);
  });
  const auto qsamples = stage("features", [&] {
    return quantized_samples(*source, windows, s.labels, prob);
  });

  s.split = split_indices(windows.size(), cfg.split_seed);
  stage("tree", [&] {
    model.tree = train_tree(subset(fsamples, s.split.train), cfg.max_leaves);
    model.quantized_tree = train_tree(subset(qsamples, s.split.train), cfg.max_leaves);
  });
  s.leaves = model.tree.leaf_count();
  s.quantized_leaves = model.quantized_tree.leaf_count();
  s.train = score(model.quantized_tree, qsamples, s.split.train);
  s.val = score(model.quantized_tree, qsamples, s.split.val);
  s.train_float = score(model.tree, fsamples, s.split.train);
  s.val_float = score(model.tree, fsamples, s.split.val);
  if (summary) *summary = std::move(s);
  return model;
}

}  // namespace iotfp
