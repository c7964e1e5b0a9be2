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

#include "iotfp/neighbor_matrix.h"

#include <algorithm>
#include <cmath>

#include "iotfp/errors.h"

namespace iotfp {

NeighborProbMatrix::NeighborProbMatrix(std::vector<DirectionalSize> sizes,
                                       std::vector<double> values,
                                       double lambda, std::size_t min_freq)
    : sizes_(std::move(sizes)),
      values_(std::move(values)),
      lambda_(lambda),
      min_freq_(min_freq) {
  if (values_.size() != sizes_.size() * sizes_.size()) {
    throw ContractError("matrix values do not match the vocabulary size");
  }
  index_.fill(-1);
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (i > 0 && !(sizes_[i - 1] < sizes_[i])) {
      throw ContractError("matrix vocabulary must be ascending and distinct");
    }
    index_[sizes_[i].value()] = static_cast<int>(i);
  }
}

NeighborProbMatrix build_matrix(const EmbeddingTable &table,
                                const Trace &device, double lambda,
                                std::size_t min_freq) {
  if (!(lambda >= 0 && lambda <= 1)) {
    throw ConfigError("lambda must lie in [0, 1]");
  }
  if (device.empty()) throw ConfigError("device trace is empty");
  std::array<std::size_t, kNumDirSizes + 1> freq{};
  for (const auto &r : device.records) ++freq[directional_size(r).value()];

  std::vector<DirectionalSize> sizes;
  std::vector<double> norms;
  for (int p = kMinIpLen; p <= kNumDirSizes; ++p) {
    if (freq[p] == 0 || freq[p] < min_freq) continue;
    const double nrm = table.norm(p);
    if (nrm == 0) continue;  // cosine undefined
    sizes.emplace_back(p);
    norms.push_back(nrm);
  }
  if (sizes.empty()) {
    throw EmptyModelError("no packet size reaches the frequency floor");
  }

  const std::size_t n = sizes.size();
  std::vector<double> values(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    values[i * n + i] = 1.0;
    const auto ri = table.row(sizes[i].value());
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto rj = table.row(sizes[j].value());
      double dot = 0;
      for (std::size_t t = 0; t < ri.size(); ++t) dot += ri[t] * rj[t];
      const double cos = std::min(1.0, dot / (norms[i] * norms[j]));
      const double v = cos >= lambda ? cos : 0.0;
      values[i * n + j] = v;
      values[j * n + i] = v;
    }
  }
  return NeighborProbMatrix(std::move(sizes), std::move(values), lambda,
                            min_freq);
}

double neighbor_prob(const NeighborProbMatrix &m, DirectionalSize observed,
                     DirectionalSize neighbour) {
  const int i = m.index_of(observed);
  const int j = m.index_of(neighbour);
  if (i < 0 || j < 0) return 0.0;
  return m.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
}

}  // namespace iotfp
