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

// Skip-gram packet-size embedding trained with negative sampling.
//
// Every directional packet size p in [1, 3000] owns one row of a K x d
// table. For a device packet p_t, the up to c packets on either side inside
// the same burst are its relevant packets; each relevant packet is paired
// with k negatives drawn from the background unigram distribution (with the
// window's own sizes removed). A step minimises
//
//   L(e_t) = -sum_i sum_j [ log s(e_t . e_i) + log s(-e_t . e_ij) ]
//
// where s is the logistic function and j runs over the k negatives drawn for
// relevant packet i. A single table serves both the center and the context
// role.

#ifndef IOTFP_EMBEDDING_H_
#define IOTFP_EMBEDDING_H_

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "iotfp/random.h"
#include "iotfp/trace.h"

namespace iotfp {

struct TrainingConfig {
  int c = 3;  // context radius
  int k = 5;  // negatives per relevant packet
  int d = 32;
  double learning_rate = 0.025;  // decays linearly to 1e-4 of this
  int epochs = 20;
  std::uint64_t rng_seed = 1;
  // Bursts bound the context windows; same threshold as key extraction.
  std::int64_t t_b_us = 1'000'000;

  void validate() const;  // throws ConfigError

  friend bool operator==(const TrainingConfig &, const TrainingConfig &) = default;
};

class EmbeddingTable {
 public:
  static constexpr int kRows = kNumDirSizes;

  EmbeddingTable() = default;
  explicit EmbeddingTable(int d);

  int dim() const { return d_; }

  // p in [1, 3000].
  std::span<double> row(int p);
  std::span<const double> row(int p) const;

  std::span<const double> data() const { return values_; }
  std::span<double> data() { return values_; }

  double cosine(int a, int b) const;
  double norm(int p) const;

  friend bool operator==(const EmbeddingTable &, const EmbeddingTable &) = default;

 private:
  int d_ = 0;
  std::vector<double> values_;  // row-major, row p at offset (p - 1) * d
};

class UnigramSampler {
 public:
  // Throws ConfigError when the background trace is empty.
  explicit UnigramSampler(const Trace &background);
  // Direct construction from counts indexed by directional size (index 0 is
  // ignored). Throws ConfigError when all counts are zero.
  explicit UnigramSampler(std::span<const std::uint64_t> counts);

  std::uint64_t frequency(int p) const { return freq_[p]; }
  std::uint64_t total() const { return total_; }
  double probability(int p) const {
    return static_cast<double>(freq_[p]) / static_cast<double>(total_);
  }

  // Draws k sizes from the unigram distribution restricted to sizes outside
  // `excluded`. Throws SamplingError when nothing remains to sample.
  std::vector<int> sample_negatives(std::span<const int> excluded, int k,
                                    Rng &rng) const;

 private:
  void build_cumulative();
  int draw(Rng &rng) const;

  std::array<std::uint64_t, kNumDirSizes + 1> freq_{};
  std::vector<std::uint64_t> cumulative_;  // cumulative_[i] covers sizes 1..i+1
  std::uint64_t total_ = 0;
};

// Loss of one step; `negatives` holds k entries per relevant packet, grouped
// in the same order as `relevants`.
double skipgram_loss(const EmbeddingTable &table, int center,
                     std::span<const int> relevants,
                     std::span<const int> negatives);

// Analytic gradient of skipgram_loss, one entry per distinct touched row.
struct SparseGradient {
  std::vector<int> rows;
  std::vector<double> values;  // rows.size() * d

  std::span<const double> of(std::size_t i, int d) const {
    return std::span<const double>(values).subspan(i * d, d);
  }
};

SparseGradient skipgram_gradient(const EmbeddingTable &table, int center,
                                 std::span<const int> relevants,
                                 std::span<const int> negatives);

// One SGD step: table -= lr * gradient. Throws TrainingError if a touched
// entry becomes non-finite.
void skipgram_step(EmbeddingTable &table, int center,
                   std::span<const int> relevants,
                   std::span<const int> negatives, double lr);

struct EmbeddingStats {
  std::uint64_t steps = 0;         // skipgram_step calls
  std::uint64_t positive_pairs = 0;
  std::uint64_t negative_draws = 0;
};

// Uniform init in [-0.5/d, 0.5/d], seeded by cfg.rng_seed.
EmbeddingTable initial_table(const TrainingConfig &cfg);

// Context sequences used for training: one per burst per destination group.
std::vector<std::vector<int>> context_sequences(const Trace &device,
                                                std::int64_t t_b_us);

// Throws ConfigError for an empty device trace or an unusable background.
EmbeddingTable train_embedding(const Trace &device, const Trace &background,
                               const TrainingConfig &cfg,
                               EmbeddingStats *stats = nullptr);

}  // namespace iotfp

#endif  // IOTFP_EMBEDDING_H_
