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

#ifndef IOTFP_NEIGHBOR_MATRIX_H_
#define IOTFP_NEIGHBOR_MATRIX_H_

#include <array>
#include <cstdint>
#include <vector>

#include "iotfp/embedding.h"
#include "iotfp/trace.h"

namespace iotfp {

// Thresholded cosine similarity over the sizes a device actually emits,
// read as P(neighbour = x_j | observed p_i). Entries are 0 or in [lambda, 1];
// the diagonal is exactly 1 and the matrix is symmetric.
class NeighborProbMatrix {
 public:
  NeighborProbMatrix() { index_.fill(-1); }
  // `values` is dense row-major over `sizes` (ascending, distinct).
  NeighborProbMatrix(std::vector<DirectionalSize> sizes,
                     std::vector<double> values, double lambda,
                     std::size_t min_freq);

  const std::vector<DirectionalSize> &sizes() const { return sizes_; }
  const std::vector<double> &values() const { return values_; }
  double lambda() const { return lambda_; }
  std::size_t min_freq() const { return min_freq_; }
  std::size_t n() const { return sizes_.size(); }

  // Row/column of a size, or -1 when it is outside the vocabulary.
  int index_of(DirectionalSize p) const { return index_[p.value()]; }
  double at(std::size_t i, std::size_t j) const { return values_[i * n() + j]; }

  friend bool operator==(const NeighborProbMatrix &,
                         const NeighborProbMatrix &) = default;

 private:
  std::vector<DirectionalSize> sizes_;
  std::vector<double> values_;
  double lambda_ = 0.4;
  std::size_t min_freq_ = 10;
  std::array<int, kNumDirSizes + 1> index_;
};

inline constexpr double kDefaultLambda = 0.4;
inline constexpr std::size_t kDefaultMinFreq = 10;

// Vocabulary: sizes seen at least min_freq times in the device trace whose
// embedding row is non-zero. Throws ConfigError for lambda outside [0, 1] or
// an empty trace, EmptyModelError when the vocabulary is empty.
NeighborProbMatrix build_matrix(const EmbeddingTable &table,
                                const Trace &device, double lambda,
                                std::size_t min_freq);

// 0 whenever either size is outside the vocabulary.
double neighbor_prob(const NeighborProbMatrix &m, DirectionalSize observed,
                     DirectionalSize neighbour);

}  // namespace iotfp

#endif  // IOTFP_NEIGHBOR_MATRIX_H_
