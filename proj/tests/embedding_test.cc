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


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "iotfp/embedding.h"
#include "iotfp/errors.h"
#include "oracles.h"

namespace iotfp {
namespace {

PacketRecord packet(std::int64_t ts, int dir_size) {
  const DirectionalSize p(dir_size);
  PacketRecord r;
  r.timestamp_us = ts;
  r.proto = L4Proto::kTcp;
  r.direction = p.direction();
  r.ip_total_len = static_cast<std::uint16_t>(p.ip_len());
  const Ipv4 lan = 0xc0a80102, server = 0x34500101;
  r.src_ip = r.direction == Direction::kLanToWan ? lan : server;
  r.dst_ip = r.direction == Direction::kLanToWan ? server : lan;
  r.src_port = r.direction == Direction::kLanToWan ? 40000 : 443;
  r.dst_port = r.direction == Direction::kLanToWan ? 443 : 40000;
  return r;
}

Trace sizes_trace(std::initializer_list<int> sizes) {
  Trace t;
  std::int64_t ts = 0;
  for (int s : sizes) t.records.push_back(packet(ts += 10, s));
  return t;
}

TEST(Sampler, ProbabilitiesFollowFrequencies) {
  const UnigramSampler s(sizes_trace({100, 100, 200}));
  EXPECT_DOUBLE_EQ(s.probability(100), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.probability(200), 1.0 / 3.0);
  EXPECT_EQ(s.probability(300), 0.0);
  EXPECT_EQ(s.total(), 3u);
}

TEST(Sampler, UniformBackgroundIsUniform) {
  std::vector<std::uint64_t> counts(kNumDirSizes + 1, 7);
  counts[0] = 0;
  const UnigramSampler s(counts);
  for (int p : {1, 20, 1500, 3000}) EXPECT_DOUBLE_EQ(s.probability(p), 1.0 / 3000);
}

TEST(Sampler, EmptyBackgroundIsAConfigError) {
  EXPECT_THROW(UnigramSampler(Trace{}), ConfigError);
  const std::vector<std::uint64_t> zeros(kNumDirSizes + 1, 0);
  EXPECT_THROW(UnigramSampler{std::span<const std::uint64_t>(zeros)}, ConfigError);
}

TEST(Sampler, ExclusionForcesTheRemainingSize) {
  const UnigramSampler s(sizes_trace({100, 200}));
  Rng rng(1);
  const int relevant[] = {100};
  for (int p : s.sample_negatives(relevant, 50, rng)) EXPECT_EQ(p, 200);
}

TEST(Sampler, ExcludingTheWholeSupportFails) {
  const UnigramSampler s(sizes_trace({100, 200}));
  Rng rng(1);
  const int relevant[] = {200, 100};
  EXPECT_THROW(s.sample_negatives(relevant, 1, rng), SamplingError);
}

TEST(Sampler, DrawsMatchUnigramWithinThreeSigma) {
  const UnigramSampler s(sizes_trace({100, 200, 300, 300}));
  Rng rng(77);
  constexpr int kDraws = 100000;
  const auto draws = s.sample_negatives({}, kDraws, rng);
  ASSERT_EQ(draws.size(), static_cast<std::size_t>(kDraws));
  const std::map<int, double> want = {{100, 0.25}, {200, 0.25}, {300, 0.5}};
  double chi2 = 0;
  for (const auto &[p, prob] : want) {
    const double got = static_cast<double>(std::count(draws.begin(), draws.end(), p));
    const double mean = kDraws * prob;
    const double sigma = std::sqrt(kDraws * prob * (1 - prob));
    EXPECT_LT(std::abs(got - mean), 3 * sigma) << "size " << p;
    chi2 += (got - mean) * (got - mean) / mean;
  }
  // Two degrees of freedom; 13.8 is the 0.999 quantile.
  EXPECT_LT(chi2, 13.8);
}

TEST(Sampler, NeverReturnsAnExcludedSize) {
  Rng rng(5);
  Trace bg;
  for (int i = 0; i < 400; ++i) {
    bg.records.push_back(packet(i, oracle::random_dir_size(rng) % 40 + 20));
  }
  const UnigramSampler s(bg);
  for (int round = 0; round < 2000; ++round) {
    std::vector<int> excluded;
    for (int i = 0; i < 7; ++i) excluded.push_back(20 + static_cast<int>(rng.below(40)));
    for (int p : s.sample_negatives(excluded, 5, rng)) {
      EXPECT_EQ(std::count(excluded.begin(), excluded.end(), p), 0);
      EXPECT_GT(s.frequency(p), 0u);
    }
  }
}

TEST(Config, RejectsDegenerateValues) {
  TrainingConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  for (auto mutate : std::vector<void (*)(TrainingConfig &)>{
           [](TrainingConfig &c) { c.c = 0; },
           [](TrainingConfig &c) { c.k = 0; },
           [](TrainingConfig &c) { c.d = 1; },
           [](TrainingConfig &c) { c.learning_rate = std::nan(""); },
           [](TrainingConfig &c) { c.epochs = -1; },
           [](TrainingConfig &c) { c.t_b_us = 0; }}) {
    TrainingConfig bad;
    mutate(bad);
    EXPECT_THROW(bad.validate(), ConfigError);
  }
}

TEST(Table, InitialisationRangeAndDeterminism) {
  TrainingConfig cfg;
  cfg.d = 16;
  const auto a = initial_table(cfg);
  EXPECT_EQ(a.dim(), 16);
  EXPECT_EQ(a.data().size(), static_cast<std::size_t>(kNumDirSizes) * 16);
  for (double x : a.data()) {
    EXPECT_GE(x, -0.5 / 16);
    EXPECT_LE(x, 0.5 / 16);
  }
  EXPECT_EQ(a, initial_table(cfg));
  cfg.rng_seed = 2;
  EXPECT_NE(a, initial_table(cfg));
}

TEST(Table, RowBoundsAreChecked) {
  EmbeddingTable t(4);
  EXPECT_NO_THROW(t.row(1));
  EXPECT_NO_THROW(t.row(3000));
  EXPECT_THROW(t.row(0), RangeError);
  EXPECT_THROW(t.row(3001), RangeError);
}

EmbeddingTable random_table(int d, Rng &rng, std::span<const int> rows) {
  EmbeddingTable t(d);
  for (int p : rows) {
    for (auto &x : t.row(p)) x = rng.uniform(-1, 1);
  }
  return t;
}

TEST(Step, ZeroLearningRateIsANoOp) {
  Rng rng(1);
  const int rows[] = {10, 20, 30, 40};
  auto t = random_table(8, rng, rows);
  const auto before = t;
  const int rel[] = {20, 30};
  const int neg[] = {40, 40, 10, 40};
  skipgram_step(t, 10, rel, neg, 0.0);
  EXPECT_EQ(t, before);
}

TEST(Step, LossMatchesLongDoubleOracle) {
  Rng rng(4);
  const int rows[] = {5, 6, 7, 8, 9};
  const auto t = random_table(8, rng, rows);
  const int rel[] = {6, 7};
  const int neg[] = {8, 9, 5, 8, 9, 6};
  oracle::Rows r;
  for (int p : rows) {
    const auto row = t.row(p);
    r[p] = std::vector<long double>(row.begin(), row.end());
  }
  EXPECT_NEAR(skipgram_loss(t, 5, rel, neg),
              static_cast<double>(oracle::skipgram_loss(r, 5, rel, neg)), 1e-12);
}

TEST(Step, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  constexpr int kD = 8;
  double worst = 0;
  for (int inst = 0; inst < 50; ++inst) {
    std::vector<int> pool;
    for (int i = 0; i < 6; ++i) pool.push_back(oracle::random_dir_size(rng));
    const auto t = random_table(kD, rng, pool);
    const int center = pool[rng.below(pool.size())];
    std::vector<int> rel, neg;
    const int n_rel = 1 + static_cast<int>(rng.below(4));
    for (int i = 0; i < n_rel; ++i) rel.push_back(pool[rng.below(pool.size())]);
    for (int i = 0; i < 2 * n_rel; ++i) neg.push_back(pool[rng.below(pool.size())]);
    const auto grad = skipgram_gradient(t, center, rel, neg);
    const auto fd = oracle::finite_difference_gradient(t, center, rel, neg, 1e-5L);
    ASSERT_EQ(grad.rows.size(), fd.size());
    for (std::size_t i = 0; i < grad.rows.size(); ++i) {
      const auto g = grad.of(i, kD);
      const auto &n = fd.at(grad.rows[i]);
      for (int j = 0; j < kD; ++j) {
        const double den = std::max({std::abs(g[j]), static_cast<double>(std::abs(n[j])), 1e-6});
        worst = std::max(worst, std::abs(g[j] - static_cast<double>(n[j])) / den);
      }
    }
  }
  EXPECT_LE(worst, 1e-4);
}

double sigmoid(double x) { return 1 / (1 + std::exp(-x)); }

double dot(const EmbeddingTable &t, int a, int b) {
  double s = 0;
  for (int j = 0; j < t.dim(); ++j) s += t.row(a)[j] * t.row(b)[j];
  return s;
}

TEST(Step, RepeatedPairRaisesItsScore) {
  TrainingConfig cfg;
  cfg.d = 16;
  auto t = initial_table(cfg);
  const int rel[] = {1600};
  const int neg[] = {300, 700, 2000};
  double last = sigmoid(dot(t, 100, 1600));
  for (int step = 0; step < 200; ++step) {
    skipgram_step(t, 100, rel, neg, 0.05);
    const double now = sigmoid(dot(t, 100, 1600));
    EXPECT_GT(now, last) << "step " << step;
    last = now;
  }
  EXPECT_GT(last, 0.9);
}

TEST(Step, NonFiniteResultIsATrainingError) {
  EmbeddingTable t(2);
  t.row(1)[0] = 1e300;
  t.row(2)[0] = -1e300;
  const int rel[] = {2};
  const int neg[] = {3};
  EXPECT_THROW(skipgram_step(t, 1, rel, neg, 1e300), TrainingError);
}

TEST(Context, SequencesFollowBurstsPerDestination) {
  Trace t;
  for (std::int64_t ts : {0, 100, 5'000'000, 5'000'100}) t.records.push_back(packet(ts, 100));
  auto other = packet(50, 200);
  other.dst_ip = 0x34500202;
  t.records.insert(t.records.begin() + 1, other);
  const auto seqs = context_sequences(t, 1'000'000);
  ASSERT_EQ(seqs.size(), 3u);
  EXPECT_EQ(seqs[0], (std::vector<int>{100, 100}));
  EXPECT_EQ(seqs[1], (std::vector<int>{100, 100}));
  EXPECT_EQ(seqs[2], (std::vector<int>{200}));
}

Trace planted_device(int a, int b, int bursts) {
  Trace t;
  for (int i = 0; i < bursts; ++i) {
    const std::int64_t ts = static_cast<std::int64_t>(i) * 30'000'000;
    t.records.push_back(packet(ts, a));
    t.records.push_back(packet(ts + 5'000, b));
  }
  return t;
}

Trace random_background(Rng &rng, std::size_t n) {
  Trace t;
  for (std::size_t i = 0; i < n; ++i) {
    t.records.push_back(packet(static_cast<std::int64_t>(i), oracle::random_dir_size(rng)));
  }
  return t;
}

TEST(Train, EmptyInputsAreConfigErrors) {
  Rng rng(1);
  const auto bg = random_background(rng, 10);
  EXPECT_THROW(train_embedding(Trace{}, bg, TrainingConfig{}), ConfigError);
  EXPECT_THROW(train_embedding(planted_device(100, 1600, 3), Trace{}, TrainingConfig{}),
               ConfigError);
}

TEST(Train, ZeroEpochsReturnsInitialisation) {
  Rng rng(1);
  TrainingConfig cfg;
  cfg.epochs = 0;
  EXPECT_EQ(train_embedding(planted_device(100, 1600, 10), random_background(rng, 100), cfg),
            initial_table(cfg));
}

TEST(Train, SameSeedIsBitIdentical) {
  Rng rng(1);
  const auto bg = random_background(rng, 2000);
  const auto dev = planted_device(100, 1600, 50);
  TrainingConfig cfg;
  cfg.epochs = 3;
  EmbeddingStats sa, sb;
  const auto a = train_embedding(dev, bg, cfg, &sa);
  const auto b = train_embedding(dev, bg, cfg, &sb);
  EXPECT_EQ(a, b);
  EXPECT_EQ(sa.steps, 3u * 100);
  EXPECT_EQ(sa.positive_pairs, 3u * 100);
  EXPECT_EQ(sa.negative_draws, 3u * 100 * 5);
  cfg.rng_seed = 9;
  EXPECT_NE(a, train_embedding(dev, bg, cfg));
}

TEST(Train, CoOccurringSizesAlign) {
  Rng rng(21);
  const auto bg = random_background(rng, 20000);
  const auto dev = planted_device(100, 1600, 500);
  TrainingConfig cfg;
  const auto t = train_embedding(dev, bg, cfg);
  EXPECT_GE(t.cosine(100, 1600), 0.8);
  std::set<int> others;
  while (others.size() < 50) {
    const int p = oracle::random_dir_size(rng);
    if (p != 100 && p != 1600) others.insert(p);
  }
  double mean = 0;
  for (int p : others) mean += t.cosine(100, p);
  mean /= static_cast<double>(others.size());
  EXPECT_LT(mean, 0.3);
  for (double x : t.data()) ASSERT_TRUE(std::isfinite(x));
}

}  // namespace
}  // namespace iotfp
