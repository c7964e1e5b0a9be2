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

#include <cmath>

#include "iotfp/errors.h"
#include "iotfp/harness.h"
#include "iotfp/key_packets.h"
#include "oracles.h"

namespace iotfp {
namespace {

constexpr Ipv4 kLan = 0xc0a80102;
constexpr std::int64_t kSec = 1'000'000;

PacketRecord to_server(std::int64_t ts, int dir_size, Ipv4 server,
                       std::uint16_t port = 443) {
  const DirectionalSize p(dir_size);
  PacketRecord r;
  r.timestamp_us = ts;
  r.proto = L4Proto::kTcp;
  r.direction = p.direction();
  r.ip_total_len = static_cast<std::uint16_t>(p.ip_len());
  const bool out = r.direction == Direction::kLanToWan;
  r.src_ip = out ? kLan : server;
  r.dst_ip = out ? server : kLan;
  r.src_port = out ? 40000 : port;
  r.dst_port = out ? port : 40000;
  return r;
}

Trace bursts_at(std::initializer_list<std::int64_t> starts, std::vector<int> sizes,
                Ipv4 server = 0x34500101) {
  Trace t;
  for (auto s : starts) {
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      t.records.push_back(to_server(s + static_cast<std::int64_t>(i) * 1000, sizes[i], server));
    }
  }
  sort_by_time(t.records);
  return t;
}

TEST(Split, MirrorsResponsesOntoTheServerTuple) {
  Trace t;
  t.records.push_back(to_server(0, 100, 0x34500101));
  t.records.push_back(to_server(10, 1600, 0x34500101));
  t.records.push_back(to_server(20, 100, 0x34500202));
  const auto groups = split_by_destination(t);
  ASSERT_EQ(groups.size(), 2u);
  const DestTuple first{0x34500101, 443, L4Proto::kTcp};
  EXPECT_EQ(groups.at(first).size(), 2u);
  EXPECT_TRUE(split_by_destination(Trace{}).empty());
}

TEST(Bursts, GapRule) {
  const auto t = bursts_at({0, 100'000, 30 * kSec, 30 * kSec + 100'000, 60 * kSec}, {100});
  const auto b = extract_bursts(t, kSec);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].ts, 0);
  EXPECT_EQ(b[1].ts, 30 * kSec);
  EXPECT_EQ(b[2].ts, 60 * kSec);
  EXPECT_EQ(b[0].pkts.size(), 2u);
}

TEST(Bursts, SinglePacketAndGapAtThreshold) {
  EXPECT_EQ(extract_bursts(bursts_at({0}, {100}), kSec).size(), 1u);
  EXPECT_EQ(extract_bursts(bursts_at({0, kSec, 2 * kSec}, {100}), kSec).size(), 1u);
  EXPECT_EQ(extract_bursts(bursts_at({0, kSec + 1}, {100}), kSec).size(), 2u);
  EXPECT_TRUE(extract_bursts(Trace{}, kSec).empty());
  EXPECT_THROW(extract_bursts(Trace{}, 0), ConfigError);
}

TEST(Bursts, ConcatenationReproducesTheGroup) {
  Rng rng(31);
  for (int round = 0; round < 30; ++round) {
    const auto t = oracle::random_extraction_trace(rng, 3000);
    for (const auto &[tuple, sub] : split_by_destination(t)) {
      std::vector<int> joined;
      for (const auto &b : extract_bursts(sub, kSec)) {
        for (auto p : b.pkts) joined.push_back(p.value());
      }
      std::vector<int> want;
      for (const auto &r : sub.records) want.push_back(directional_size(r).value());
      EXPECT_EQ(joined, want);
    }
  }
}

TEST(Cv, MatchesDirectComputation) {
  const auto t = bursts_at({0, 10 * kSec, 110 * kSec, 120 * kSec, 220 * kSec}, {100});
  double mean = 0;
  const double cv = burst_interval_cv(extract_bursts(t, kSec), &mean);
  // Intervals 10, 100, 10, 100 s: mean 55, population std 45.
  EXPECT_DOUBLE_EQ(mean, 55.0 * kSec);
  EXPECT_NEAR(cv, 45.0 / 55.0, 1e-12);
  EXPECT_THROW(burst_interval_cv(extract_bursts(bursts_at({0}, {100}), kSec), nullptr),
               ContractError);
}

TEST(Extract, PeriodicBurstsBecomeKeys) {
  ExtractionConfig cfg;
  cfg.min_bursts = 4;
  const auto t = bursts_at({0, 30 * kSec, 60 * kSec, 90 * kSec, 120 * kSec},
                           {543, 1643, 431, 1899});
  const auto set = extract_key_packets(t, cfg);
  ASSERT_EQ(set.entries.size(), 4u);
  const int want[] = {431, 543, 1643, 1899};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(set.entries[i].size.value(), want[i]);
    EXPECT_DOUBLE_EQ(set.entries[i].period_us, 30.0 * kSec);
    EXPECT_EQ(set.entries[i].cv, 0.0);
  }
}

TEST(Extract, BurstCountMustExceedMinimum) {
  ExtractionConfig cfg;  // min_bursts = 5
  const auto five = bursts_at({0, 30 * kSec, 60 * kSec, 90 * kSec, 120 * kSec}, {543});
  EXPECT_TRUE(extract_key_packets(five, cfg).entries.empty());
  const auto six =
      bursts_at({0, 30 * kSec, 60 * kSec, 90 * kSec, 120 * kSec, 150 * kSec}, {543});
  EXPECT_EQ(extract_key_packets(six, cfg).entries.size(), 1u);
}

TEST(Extract, IrregularIntervalsAreRejected) {
  ExtractionConfig cfg;
  cfg.min_bursts = 4;
  const auto t = bursts_at({0, 10 * kSec, 110 * kSec, 120 * kSec, 220 * kSec}, {100});
  EXPECT_TRUE(extract_key_packets(t, cfg).entries.empty());
  EXPECT_TRUE(extract_key_packets(bursts_at({0}, {100}), cfg).entries.empty());
}

TEST(Extract, DuplicateSizeKeepsShortestPeriod) {
  ExtractionConfig cfg;
  cfg.min_bursts = 2;
  auto t = bursts_at({0, 60 * kSec, 120 * kSec, 180 * kSec}, {700}, 0x34500101);
  const auto fast = bursts_at({5 * kSec, 25 * kSec, 45 * kSec, 65 * kSec}, {700}, 0x34500202);
  t.records.insert(t.records.end(), fast.records.begin(), fast.records.end());
  sort_by_time(t.records);
  const auto set = extract_key_packets(t, cfg);
  ASSERT_EQ(set.entries.size(), 1u);
  EXPECT_DOUBLE_EQ(set.entries[0].period_us, 20.0 * kSec);
  EXPECT_EQ(set.entries[0].dest.ip, 0x34500202u);
}

TEST(Extract, MatchesBruteForceOracle) {
  Rng rng(4242);
  for (int round = 0; round < 60; ++round) {
    ExtractionConfig cfg;
    cfg.eta = rng.uniform(0.05, 0.5);
    cfg.min_bursts = 2 + rng.below(8);
    const auto t = oracle::random_extraction_trace(rng, 4000);
    EXPECT_TRUE(oracle::same_keys(extract_key_packets(t, cfg),
                                  oracle::extract_key_packets(t, cfg)))
        << "round " << round;
  }
}

TEST(Extract, RecoversPlantedPeriodsAndIgnoresNoise) {
  Rng rng(17);
  DeviceSpec spec;
  spec.device_id = "planted";
  spec.bursts = {{{DirectionalSize(300), DirectionalSize(1800)}, 30 * kSec, 0.05},
                 {{DirectionalSize(520)}, 300 * kSec, 0.05}};
  auto t = generate_synthetic_device(spec, 7200 * kSec, rng);
  // Aperiodic noise towards its own server.
  for (double ts = 0; ts < 7200.0 * kSec; ts += rng.exponential(1.0 / (40.0 * kSec))) {
    t.records.push_back(to_server(static_cast<std::int64_t>(ts), 999, 0x22000001, 8080));
  }
  sort_by_time(t.records);
  const auto set = extract_key_packets(t, ExtractionConfig{});
  std::vector<int> got;
  for (const auto &e : set.entries) got.push_back(e.size.value());
  EXPECT_EQ(got, (std::vector<int>{300, 520, 1800}));
}

TEST(Config, Validation) {
  ExtractionConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.eta = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.t_b_us = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

KeyPacket key(int size, double period) {
  KeyPacket k;
  k.size = DirectionalSize(size);
  k.period_us = period;
  return k;
}

TEST(TopN, OrdersByPeriodThenSize) {
  KeyPacketSet set;
  set.entries = {key(100, 1800 * kSec), key(200, 30 * kSec), key(300, 300 * kSec)};
  const auto top = select_top_n(set, 2);
  EXPECT_EQ(top.keys, (std::vector<DirectionalSize>{DirectionalSize(200), DirectionalSize(300)}));
  EXPECT_FALSE(top.shortfall);

  set.entries = {key(200, 30 * kSec), key(100, 30 * kSec)};
  EXPECT_EQ(select_top_n(set, 2).keys,
            (std::vector<DirectionalSize>{DirectionalSize(100), DirectionalSize(200)}));
}

TEST(TopN, ShortfallAndErrors) {
  KeyPacketSet set;
  set.entries = {key(100, 1), key(200, 2)};
  const auto top = select_top_n(set, 16);
  EXPECT_EQ(top.keys.size(), 2u);
  EXPECT_TRUE(top.shortfall);
  EXPECT_THROW(select_top_n(set, 0), ConfigError);
  EXPECT_THROW(select_top_n(KeyPacketSet{}, 1), EmptyModelError);
}

}  // namespace
}  // namespace iotfp
