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

#include "iotfp/embedding.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "iotfp/errors.h"
#include "iotfp/key_packets.h"

namespace iotfp {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow for large |x|.
double log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

void check_index(int p) {
  if (p < 1 || p > EmbeddingTable::kRows) {
    throw RangeError("embedding index " + std::to_string(p) +
                     " outside [1, 3000]");
  }
}

std::size_t negatives_per_relevant(std::span<const int> relevants,
                                   std::span<const int> negatives) {
  if (relevants.empty()) {
    if (!negatives.empty()) {
      throw ContractError("negatives given without relevant packets");
    }
    return 0;
  }
  if (negatives.size() % relevants.size() != 0) {
    throw ContractError("negatives must hold k entries per relevant packet");
  }
  return negatives.size() / relevants.size();
}

// Row accumulator; a step touches at most a few dozen rows, so linear lookup
// beats hashing.
class GradientBuilder {
 public:
  explicit GradientBuilder(int d) : d_(d) {}

  void add(int row, double scale, std::span<const double> v) {
    auto it = std::find(grad_.rows.begin(), grad_.rows.end(), row);
    std::size_t i;
    if (it == grad_.rows.end()) {
      i = grad_.rows.size();
      grad_.rows.push_back(row);
      grad_.values.resize(grad_.values.size() + d_, 0.0);
    } else {
      i = static_cast<std::size_t>(it - grad_.rows.begin());
    }
    double *g = grad_.values.data() + i * d_;
    for (int j = 0; j < d_; ++j) g[j] += scale * v[j];
  }

  SparseGradient take() { return std::move(grad_); }

 private:
  int d_;
  SparseGradient grad_;
};

}  // namespace

void TrainingConfig::validate() const {
  if (c < 1) throw ConfigError("context radius c must be >= 1");
  if (k < 1) throw ConfigError("negatives k must be >= 1");
  if (d < 2) throw ConfigError("dimension d must be >= 2");
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (t_b_us <= 0) throw ConfigError("t_b must be positive");
}

EmbeddingTable::EmbeddingTable(int d)
    : d_(d), values_(static_cast<std::size_t>(kRows) * d, 0.0) {
  if (d < 1) throw ConfigError("embedding dimension must be positive");
}

std::span<double> EmbeddingTable::row(int p) {
  check_index(p);
  return std::span<double>(values_).subspan(
      static_cast<std::size_t>(p - 1) * d_, d_);
}

std::span<const double> EmbeddingTable::row(int p) const {
  check_index(p);
  return std::span<const double>(values_).subspan(
      static_cast<std::size_t>(p - 1) * d_, d_);
}

double EmbeddingTable::norm(int p) const {
  const auto r = row(p);
  return std::sqrt(dot(r, r));
}

double EmbeddingTable::cosine(int a, int b) const {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0 || nb == 0) return 0;
  return dot(row(a), row(b)) / (na * nb);
}

UnigramSampler::UnigramSampler(const Trace &background) {
  if (background.empty()) {
    throw ConfigError("background trace is empty; cannot build sampler");
  }
  for (const auto &r : background.records) {
    ++freq_[directional_size(r).value()];
  }
  build_cumulative();
}

UnigramSampler::UnigramSampler(std::span<const std::uint64_t> counts) {
  for (std::size_t p = 1; p < counts.size() && p <= kNumDirSizes; ++p) {
    freq_[p] = counts[p];
  }
  build_cumulative();
  if (total_ == 0) throw ConfigError("sampler counts are all zero");
}

void UnigramSampler::build_cumulative() {
  cumulative_.resize(kNumDirSizes);
  std::uint64_t run = 0;
  for (int p = 1; p <= kNumDirSizes; ++p) {
    run += freq_[p];
    cumulative_[p - 1] = run;
  }
  total_ = run;
}

int UnigramSampler::draw(Rng &rng) const {
  const std::uint64_t u = rng.below(total_);
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return static_cast<int>(it - cumulative_.begin()) + 1;
}

std::vector<int> UnigramSampler::sample_negatives(std::span<const int> excluded,
                                                  int k, Rng &rng) const {
  std::vector<int> distinct(excluded.begin(), excluded.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::uint64_t removed = 0;
  for (int p : distinct) {
    if (p >= 1 && p <= kNumDirSizes) removed += freq_[p];
  }
  if (removed >= total_) {
    throw SamplingError("no background packet left after excluding the window");
  }
  const auto is_excluded = [&distinct](int p) {
    return std::binary_search(distinct.begin(), distinct.end(), p);
  };

  std::vector<int> out;
  out.reserve(k);
  // Rejection is exact for the renormalised distribution; it only becomes
  // slow when the excluded mass dominates, which the fallback handles.
  constexpr int kMaxRejections = 64;
  int rejections = 0;
  while (static_cast<int>(out.size()) < k && rejections < kMaxRejections) {
    const int p = draw(rng);
    if (is_excluded(p)) {
      ++rejections;
      continue;
    }
    out.push_back(p);
  }
  if (static_cast<int>(out.size()) < k) {
    std::vector<std::uint64_t> cum(kNumDirSizes);
    std::uint64_t run = 0;
    for (int p = 1; p <= kNumDirSizes; ++p) {
      if (!is_excluded(p)) run += freq_[p];
      cum[p - 1] = run;
    }
    while (static_cast<int>(out.size()) < k) {
      const std::uint64_t u = rng.below(run);
      const auto it = std::upper_bound(cum.begin(), cum.end(), u);
      out.push_back(static_cast<int>(it - cum.begin()) + 1);
    }
  }
  return out;
}

double skipgram_loss(const EmbeddingTable &table, int center,
                     std::span<const int> relevants,
                     std::span<const int> negatives) {
  const std::size_t k = negatives_per_relevant(relevants, negatives);
  const auto et = table.row(center);
  double loss = 0;
  for (std::size_t i = 0; i < relevants.size(); ++i) {
    const double pos = log_sigmoid(dot(et, table.row(relevants[i])));
    for (std::size_t j = 0; j < k; ++j) {
      const double neg = log_sigmoid(-dot(et, table.row(negatives[i * k + j])));
      loss -= pos + neg;
    }
  }
  return loss;
}

SparseGradient skipgram_gradient(const EmbeddingTable &table, int center,
                                 std::span<const int> relevants,
                                 std::span<const int> negatives) {
  const std::size_t k = negatives_per_relevant(relevants, negatives);
  const int d = table.dim();
  GradientBuilder grad(d);
  const auto et = table.row(center);
  for (std::size_t i = 0; i < relevants.size(); ++i) {
    const auto er = table.row(relevants[i]);
    // d/dx [-log s(x)] = -(1 - s(x)); the positive term repeats k times.
    const double gpos = -static_cast<double>(k) * (1.0 - sigmoid(dot(et, er)));
    grad.add(center, gpos, er);
    grad.add(relevants[i], gpos, et);
    for (std::size_t j = 0; j < k; ++j) {
      const int n = negatives[i * k + j];
      const auto en = table.row(n);
      // d/dx [-log s(-x)] = s(x)
      const double gneg = sigmoid(dot(et, en));
      grad.add(center, gneg, en);
      grad.add(n, gneg, et);
    }
  }
  return grad.take();
}

void skipgram_step(EmbeddingTable &table, int center,
                   std::span<const int> relevants,
                   std::span<const int> negatives, double lr) {
  if (lr == 0 || relevants.empty()) {
    // Still validate indices so bad input never passes silently.
    table.row(center);
    for (int p : relevants) table.row(p);
    for (int p : negatives) table.row(p);
    return;
  }
  const auto grad = skipgram_gradient(table, center, relevants, negatives);
  const int d = table.dim();
  for (std::size_t i = 0; i < grad.rows.size(); ++i) {
    auto row = table.row(grad.rows[i]);
    const auto g = grad.of(i, d);
    for (int j = 0; j < d; ++j) {
      row[j] -= lr * g[j];
      if (!std::isfinite(row[j])) {
        throw TrainingError("non-finite embedding entry after step on row " +
                            std::to_string(grad.rows[i]));
      }
    }
  }
}

EmbeddingTable initial_table(const TrainingConfig &cfg) {
  cfg.validate();
  EmbeddingTable table(cfg.d);
  Rng rng(cfg.rng_seed);
  const double half = 0.5 / cfg.d;
  for (double &v : table.data()) v = rng.uniform(-half, half);
  return table;
}

std::vector<std::vector<int>> context_sequences(const Trace &device,
                                                std::int64_t t_b_us) {
  std::vector<std::vector<int>> seqs;
  for (const auto &[tuple, sub] : split_by_destination(device)) {
    for (const auto &burst : extract_bursts(sub, t_b_us)) {
      std::vector<int> s;
      s.reserve(burst.pkts.size());
      for (const auto p : burst.pkts) s.push_back(p.value());
      seqs.push_back(std::move(s));
    }
  }
  return seqs;
}

EmbeddingTable train_embedding(const Trace &device, const Trace &background,
                               const TrainingConfig &cfg,
                               EmbeddingStats *stats) {
  cfg.validate();
  if (device.empty()) throw ConfigError("device trace is empty");
  const UnigramSampler sampler(background);
  EmbeddingTable table = initial_table(cfg);
  EmbeddingStats local;

  const auto seqs = context_sequences(device, cfg.t_b_us);
  // The sampling stream is independent of the init stream.
  Rng rng(cfg.rng_seed ^ 0x9e3779b97f4a7c15ull);
  const double total_steps =
      static_cast<double>(cfg.epochs) * static_cast<double>(device.size());
  std::uint64_t done = 0;
  std::vector<int> relevants;
  std::vector<int> window;
  std::vector<int> negatives;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto &seq : seqs) {
      const int len = static_cast<int>(seq.size());
      for (int t = 0; t < len; ++t, ++done) {
        const int lo = std::max(0, t - cfg.c);
        const int hi = std::min(len - 1, t + cfg.c);
        relevants.clear();
        window.clear();
        for (int i = lo; i <= hi; ++i) {
          window.push_back(seq[i]);
          if (i != t) relevants.push_back(seq[i]);
        }
        if (relevants.empty()) continue;
        negatives.clear();
        for (std::size_t i = 0; i < relevants.size(); ++i) {
          const auto draw = sampler.sample_negatives(window, cfg.k, rng);
          negatives.insert(negatives.end(), draw.begin(), draw.end());
        }
        const double progress = static_cast<double>(done) / total_steps;
        const double lr =
            cfg.learning_rate * std::max(1e-4, 1.0 - progress);
        skipgram_step(table, seq[t], relevants, negatives, lr);
        ++local.steps;
        local.positive_pairs += relevants.size();
        local.negative_draws += negatives.size();
      }
    }
  }
  if (stats) *stats = local;
  return table;
}

}  // namespace iotfp
