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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "iotfp/dataplane.h"
#include "iotfp/embedding.h"
#include "iotfp/errors.h"
#include "iotfp/harness.h"
#include "iotfp/key_packets.h"
#include "iotfp/model.h"
#include "iotfp/pipeline.h"
#include "iotfp/table_compiler.h"
#include "oracles.h"
#include "scenario.h"

namespace iotfp {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double x, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << x;
  return s.str();
}

std::vector<Window> pick(std::span<const Window> all,
                         std::span<const std::size_t> idx) {
  std::vector<Window> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Shared end-to-end runs (criteria 1, 2, 6, 7).

struct EndToEnd {
  testing::ScenarioOptions opts;
  testing::Scenario scenario;
  std::vector<testing::DeviceRun> runs;
  RunResult sim;
  std::vector<EvalReport> reports;  // test split, per device
  double seconds = 0;
};

EndToEnd run_end_to_end(MixMode mode) {
  const auto t0 = Clock::now();
  EndToEnd e;
  e.opts.mode = mode;
  e.scenario = testing::build_scenario(e.opts);
  e.runs = testing::train_all(e.scenario, e.opts);
  std::vector<CompiledTableSet> sets;
  for (const auto &r : e.runs) sets.push_back(r.tables);
  e.sim = run_trace(e.scenario.mixed, sets);
  const auto test = pick(e.scenario.windows, e.scenario.split.test);
  for (std::size_t i = 0; i < e.runs.size(); ++i) {
    e.reports.push_back(evaluate(e.sim.devices[i].detections, e.scenario.mixed,
                                 test, e.runs[i].model.device_id));
  }
  e.seconds = seconds_since(t0);
  return e;
}

std::string report_line(const EvalReport &r) {
  return r.device_id + "(p=" + num(r.counts.precision().value_or(-1)) +
         " r=" + num(r.counts.recall().value_or(-1)) +
         " fpr=" + num(r.counts.fpr().value_or(-1)) + ")";
}

// ---------------------------------------------------------------------------
// 1. Control/data-plane agreement.

struct Agreement {
  std::uint64_t windows = 0;
  std::uint64_t positives = 0;
  std::uint64_t mismatches = 0;
  std::uint64_t missing = 0;
  std::uint64_t collisions = 0;
};

Agreement check_agreement(const Trace &trace, std::span<const testing::DeviceRun> runs,
                          const RunResult &sim, std::int64_t t_w_us) {
  Agreement a;
  const auto windows = windowize(trace, t_w_us);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto &model = runs[i].model;
    const auto &prob = runs[i].tables.probability;
    std::map<std::pair<Ipv4, std::int64_t>, const Detection *> by_key;
    for (const auto &d : sim.devices[i].detections) {
      by_key[{d.ip_key, d.window_start_us}] = &d;
    }
    for (const auto &w : windows) {
      const auto q = quantized_feature_vector(window_sizes(trace, w), prob);
      const std::vector<double> qd(q.begin(), q.end());
      const int offline = predict(model.quantized_tree, qd);
      ++a.windows;
      const auto it = by_key.find({w.ip_key, w.start_us});
      if (it == by_key.end()) {
        ++a.missing;
        continue;
      }
      if (it->second->label != offline || it->second->v != q) ++a.mismatches;
      a.positives += offline == 1;
    }
    if (by_key.size() != windows.size()) a.missing += 1;
    a.collisions += sim.devices[i].stats.collisions;
  }
  return a;
}

Outcome criterion1(const EndToEnd &nat) {
  // Behind the NAT every packet shares one host key; the plain mix below
  // keeps each LAN host separate so register slots are exercised per host.
  const auto a1 = check_agreement(nat.scenario.mixed, nat.runs, nat.sim,
                                  nat.opts.t_w_us);

  testing::ScenarioOptions o;
  o.duration_us = 600'000'000;
  o.seed = 11;
  Rng rng(o.seed);
  Trace plain;
  double dev_pps = 0;
  for (const auto &spec : testing::five_devices()) {
    const auto t = generate_synthetic_device(spec, o.duration_us, rng);
    plain.records.insert(plain.records.end(), t.records.begin(), t.records.end());
    dev_pps += testing::device_rate_pps(spec);
  }
  BackgroundConfig bg;
  bg.rate_pps = dev_pps * 100;
  const auto back = generate_synthetic_background(bg, o.duration_us, rng);
  plain.records.insert(plain.records.end(), back.records.begin(), back.records.end());
  sort_by_time(plain.records);
  std::vector<CompiledTableSet> sets;
  for (const auto &r : nat.runs) sets.push_back(r.tables);
  RunOptions ro;
  ro.sim.debug_check = true;
  const auto sim = run_trace(plain, sets, ro);
  const auto a2 = check_agreement(plain, nat.runs, sim, o.t_w_us);

  const std::uint64_t windows = a1.windows + a2.windows;
  const bool pass = windows >= 10'000 && a1.mismatches == 0 && a2.mismatches == 0 &&
                    a1.missing == 0 && a2.missing == 0 && a2.collisions == 0;
  return {pass, "windows=" + std::to_string(windows) +
                    " (nat=" + std::to_string(a1.windows) +
                    ", multi-host=" + std::to_string(a2.windows) +
                    ") positive=" + std::to_string(a1.positives + a2.positives) +
                    " mismatches=" + std::to_string(a1.mismatches + a2.mismatches) +
                    " missing=" + std::to_string(a1.missing + a2.missing) +
                    " multi-host collisions=" + std::to_string(a2.collisions)};
}

// ---------------------------------------------------------------------------
// 2. Quantization bound.

Outcome criterion2(const EndToEnd &nat) {
  double worst = 0;
  std::size_t entries = 0;
  bool stray_rows = false;
  for (const auto &r : nat.runs) {
    const auto table = compile_probability_table(r.model);
    const auto keys = r.model.keys();
    for (int p = kMinIpLen; p <= kNumDirSizes; ++p) {
      const DirectionalSize size(p);
      const auto it = table.rows.find(p);
      if (r.model.matrix.index_of(size) < 0) {
        stray_rows |= it != table.rows.end();
        continue;
      }
      for (std::size_t j = 0; j < keys.size(); ++j) {
        const double exact = neighbor_prob(r.model.matrix, size, keys[j]);
        const double err = std::abs(exact - it->second[j] / 255.0);
        worst = std::max(worst, err);
        ++entries;
      }
    }
  }
  const double bound = 1.0 / 255.0;
  return {worst < bound && !stray_rows && entries > 0,
          "max error=" + num(worst, 6) + " over " + std::to_string(entries) +
              " entries (bound " + num(bound, 6) + ")"};
}

// ---------------------------------------------------------------------------
// 3. Gradient check.

Outcome criterion3() {
  const auto t0 = Clock::now();
  constexpr int kD = 8, kC = 2, kK = 3;
  Rng rng(2024);
  double worst = 0;
  for (int inst = 0; inst < 100; ++inst) {
    EmbeddingTable table(kD);
    // Only the touched rows matter; draw them from a small pool so rows
    // repeat between roles, as they do in training.
    std::vector<int> pool;
    for (int i = 0; i < 12; ++i) {
      pool.push_back(1 + static_cast<int>(rng.below(kNumDirSizes)));
    }
    for (int p : pool) {
      for (auto &x : table.row(p)) x = rng.uniform(-1.0, 1.0);
    }
    const int center = pool[rng.below(pool.size())];
    const int n_rel = 1 + static_cast<int>(rng.below(2 * kC));
    std::vector<int> rel, neg;
    for (int i = 0; i < n_rel; ++i) rel.push_back(pool[rng.below(pool.size())]);
    for (int i = 0; i < n_rel * kK; ++i) neg.push_back(pool[rng.below(pool.size())]);

    const auto grad = skipgram_gradient(table, center, rel, neg);
    const auto numeric = oracle::finite_difference_gradient(table, center, rel, neg);
    for (std::size_t r = 0; r < grad.rows.size(); ++r) {
      const auto g = grad.of(r, kD);
      const auto &n = numeric.at(grad.rows[r]);
      for (int j = 0; j < kD; ++j) {
        const long double a = g[j];
        const long double b = n[j];
        const long double den =
            std::max({std::abs(a), std::abs(b), static_cast<long double>(1e-6)});
        worst = std::max(worst, static_cast<double>(std::abs(a - b) / den));
      }
    }
    if (numeric.size() != grad.rows.size()) worst = 1;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 10,
          "max relative error=" + num(worst, 3) + " runtime=" + num(secs, 3) + "s"};
}

// ---------------------------------------------------------------------------
// 4. Embedding co-occurrence.

Outcome criterion4() {
  const auto t0 = Clock::now();
  Rng rng(99);
  const std::vector<int> planted = {312, 640, 1377, 1810, 2604};
  std::vector<int> others;
  std::set<int> used(planted.begin(), planted.end());
  while (others.size() < 200) {
    const int p = oracle::random_dir_size(rng);
    if (used.insert(p).second) others.push_back(p);
  }

  // Device capture: the planted sizes always burst together towards one
  // server; the other sizes burst in random groups towards many servers.
  Trace device, background;
  const auto emit = [](Trace &t, std::int64_t ts, int p, Ipv4 server) {
    PacketRecord r;
    r.timestamp_us = ts;
    const DirectionalSize s(p);
    r.ip_total_len = static_cast<std::uint16_t>(s.ip_len());
    r.direction = s.direction();
    r.proto = L4Proto::kTcp;
    r.src_ip = s.direction() == Direction::kLanToWan ? 0xc0a80102 : server;
    r.dst_ip = s.direction() == Direction::kLanToWan ? server : 0xc0a80102;
    t.records.push_back(r);
  };
  std::int64_t ts = 0;
  for (int b = 0; b < 3000; ++b) {
    ts += 10'000'000;
    if (b % 2 == 0) {
      auto order = planted;
      rng.shuffle(order.begin(), order.end());
      for (std::size_t i = 0; i < order.size(); ++i) {
        emit(device, ts + static_cast<std::int64_t>(i) * 1000, order[i], 0x34000001);
      }
    } else {
      const Ipv4 server = 0x35000000u + static_cast<Ipv4>(rng.below(1000));
      for (int i = 0; i < 5; ++i) {
        emit(device, ts + i * 1000, others[rng.below(others.size())], server);
      }
    }
  }
  // Unigram source: every size of the corpus, the planted ones included.
  for (int i = 0; i < 20000; ++i) {
    const int p = i % 40 == 0 ? planted[rng.below(planted.size())]
                              : others[rng.below(others.size())];
    emit(background, i, p, 0x36000001);
  }

  TrainingConfig cfg;
  cfg.rng_seed = 5;
  const auto table = train_embedding(device, background, cfg);
  double within = 0, cross = 0;
  int nw = 0, nc = 0;
  for (std::size_t i = 0; i < planted.size(); ++i) {
    for (std::size_t j = i + 1; j < planted.size(); ++j) {
      within += table.cosine(planted[i], planted[j]);
      ++nw;
    }
    for (int o : others) {
      cross += table.cosine(planted[i], o);
      ++nc;
    }
  }
  within /= nw;
  cross /= nc;
  const double secs = seconds_since(t0);
  return {within >= 0.8 && cross <= 0.3 && secs < 60,
          "within=" + num(within) + " cross=" + num(cross) +
              " runtime=" + num(secs, 3) + "s"};
}

// ---------------------------------------------------------------------------
// 5. Key-packet extraction against the brute-force oracle.

Outcome criterion5() {
  Rng rng(4242);
  int mismatched = 0;
  std::size_t compared_keys = 0;
  for (int t = 0; t < 100; ++t) {
    const auto trace = oracle::random_extraction_trace(rng, 10'000);
    ExtractionConfig cfg;
    cfg.t_b_us = 200'000 + static_cast<std::int64_t>(rng.below(1'800'000));
    cfg.eta = rng.uniform(0.05, 0.5);
    cfg.min_bursts = 2 + rng.below(6);
    const auto got = extract_key_packets(trace, cfg);
    const auto want = oracle::extract_key_packets(trace, cfg);
    compared_keys += want.size();
    if (!oracle::same_keys(got, want)) ++mismatched;
  }

  // Planted periods with up to 5% jitter, surrounded by aperiodic noise.
  std::size_t planted = 0, found = 0;
  for (int t = 0; t < 40; ++t) {
    DeviceSpec spec;
    spec.device_id = "planted";
    std::set<int> taken;
    const int groups = 1 + static_cast<int>(rng.below(4));
    for (int g = 0; g < groups; ++g) {
      BurstSpec b;
      const int n = 1 + static_cast<int>(rng.below(4));
      while (static_cast<int>(b.sizes.size()) < n) {
        const int p = oracle::random_dir_size(rng);
        if (taken.insert(p).second) b.sizes.emplace_back(p);
      }
      b.period_us = 5'000'000 + static_cast<std::int64_t>(rng.below(55'000'000));
      b.jitter = rng.uniform(0.0, 0.05);
      spec.bursts.push_back(b);
    }
    auto trace = generate_synthetic_device(spec, 1'200'000'000, rng);
    BackgroundConfig bg;
    bg.rate_pps = 2;
    const auto noise = generate_synthetic_background(bg, 1'200'000'000, rng);
    trace.records.insert(trace.records.end(), noise.records.begin(), noise.records.end());
    sort_by_time(trace.records);
    const auto keys = extract_key_packets(trace, ExtractionConfig{});
    std::set<int> got;
    for (const auto &k : keys.entries) got.insert(k.size.value());
    for (int p : taken) {
      ++planted;
      found += got.count(p);
    }
  }
  const double recall = static_cast<double>(found) / static_cast<double>(planted);
  return {mismatched == 0 && recall == 1.0,
          "oracle mismatches=" + std::to_string(mismatched) + "/100 (" +
              std::to_string(compared_keys) + " keys) planted recall=" +
              num(recall) + " (" + std::to_string(found) + "/" +
              std::to_string(planted) + ")"};
}

// ---------------------------------------------------------------------------
// 6 / 7. End-to-end accuracy.

Outcome criterion6(const EndToEnd &nat) {
  bool pass = nat.seconds < 300;
  std::string detail;
  for (const auto &r : nat.reports) {
    const auto p = r.counts.precision(), rc = r.counts.recall(), f = r.counts.fpr();
    pass &= p && *p >= 0.90 && rc && *rc >= 0.90 && f && *f <= 0.01;
    detail += report_line(r) + " ";
  }
  return {pass, detail + "runtime=" + num(nat.seconds, 4) + "s"};
}

Outcome criterion7(const EndToEnd &nat, const EndToEnd &vpn) {
  bool pass = nat.reports.size() == vpn.reports.size();
  double worst_p = 0, worst_r = 0;
  std::string detail;
  for (std::size_t i = 0; pass && i < nat.reports.size(); ++i) {
    const auto &a = nat.reports[i].counts;
    const auto &b = vpn.reports[i].counts;
    if (!a.precision() || !b.precision() || !a.recall() || !b.recall()) {
      pass = false;
      break;
    }
    const double dp = *a.precision() - *b.precision();
    const double dr = *a.recall() - *b.recall();
    worst_p = std::max(worst_p, dp);
    worst_r = std::max(worst_r, dr);
    pass &= dp <= 0.05 && dr <= 0.05;
    detail += report_line(vpn.reports[i]) + " ";
  }
  return {pass, detail + "max precision drop=" + num(worst_p) +
                    " max recall drop=" + num(worst_r)};
}

// ---------------------------------------------------------------------------
// 8. Register safety.

Outcome criterion8() {
  // Through the simulator: one dimension, one size whose row is 255.
  CompiledTableSet set;
  set.device_id = "registers";
  set.t_w_us = 1'000'000;
  set.keys = {DirectionalSize(100)};
  set.direction_rules = {DirectionRule{Direction::kLanToWan, 0},
                         DirectionRule{Direction::kWanToLan, 1500}};
  set.probability.dims = 1;
  set.probability.rows[100] = {255};
  set.inference_rules = {InferenceRule{1, {{0u, 0xffffffffu}}, 0}};
  set.register_spec = RegisterSpec{32, 1, 1};
  const DataPlane dp(set);
  auto bank = dp.make_bank();
  SimStats stats;
  PacketRecord r;
  r.src_ip = 0xc0a80102;
  r.ip_total_len = 100;
  constexpr std::uint64_t kIncrements = std::uint64_t{1} << 24;
  bool wrapped = false;
  std::uint32_t prev = 0;
  for (std::uint64_t i = 0; i < kIncrements; ++i) {
    dp.process_packet(r, bank, stats);
    const std::uint32_t now = bank.cells(0)[0];
    wrapped |= now < prev;
    prev = now;
  }
  const bool exact32 = prev == 0xffffffffu - 0xffffffu;  // 2^32 - 2^24
  r.timestamp_us = set.t_w_us;
  const auto det = dp.process_packet(r, bank, stats);
  const bool snapshot = det && det->v.size() == 1 && det->v[0] == prev;

  // First wrap of a 32-bit accumulator lies beyond 2^24 increments.
  std::uint64_t first_wrap32 = 0;
  {
    std::uint32_t acc = 0;
    for (std::uint64_t i = 1;; ++i) {
      const std::uint32_t next = acc + 255u;
      if (next < acc) {
        first_wrap32 = i;
        break;
      }
      acc = next;
    }
  }
  // Scaled analog: 16-bit accumulator, bound 2^8 increments.
  std::uint64_t first_wrap16 = 0;
  bool safe16 = true;
  {
    std::uint16_t acc = 0;
    for (std::uint64_t i = 1; i <= 1024; ++i) {
      const auto next = static_cast<std::uint16_t>(acc + 255u);
      if (next < acc) {
        if (i <= 256) safe16 = false;
        if (!first_wrap16) first_wrap16 = i;
      }
      acc = next;
    }
  }
  const bool pass = !wrapped && exact32 && snapshot && first_wrap32 > kIncrements &&
                    safe16 && first_wrap16 > 256;
  return {pass, "2^24 increments -> " + std::to_string(prev) +
                    (wrapped ? " (wrapped)" : " (no wrap)") +
                    "; first 32-bit wrap at increment " + std::to_string(first_wrap32) +
                    "; first 16-bit wrap at increment " + std::to_string(first_wrap16)};
}

// ---------------------------------------------------------------------------
// 9. Hot-path audit and throughput.

std::string read_file(const std::filesystem::path &p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion9(const EndToEnd &nat) {
  const std::filesystem::path src = IOTFP_SOURCE_DIR;
  const auto dataplane = read_file(src / "src" / "dataplane.cc");
  const auto compiler = read_file(src / "src" / "table_compiler.cc");
  // process_packet and everything it calls on the per-packet path.
  const std::vector<std::pair<const std::string *, std::string>> functions = {
      {&dataplane, "DataPlane::process_packet("},
      {&dataplane, "DataPlane::close_window("},
      {&dataplane, "DataPlane::infer("},
      {&dataplane, "DataPlane::check_bank("},
      {&dataplane, "host_slot(Ipv4"},
      {&compiler, "match_rules(std::span"},
      {&compiler, "InferenceRule::matches("},
  };
  std::vector<std::string> findings;
  for (const auto &[text, sig] : functions) {
    const auto body = oracle::function_body(*text, sig);
    if (body.empty()) {
      findings.push_back("missing " + sig);
      continue;
    }
    for (const auto &f : oracle::real_arithmetic_tokens(body)) {
      findings.push_back(sig + " uses '" + f + "'");
    }
  }

  // Throughput: one device's table set over its share of the NAT mix.
  const auto &trace = nat.scenario.mixed;
  const CompiledTableSet one[] = {nat.runs.front().tables};
  double pps = 0;
  for (int rep = 0; rep < 3; ++rep) {
    const auto res = run_trace(trace, one);
    pps = std::max(pps, res.total.packets_per_second());
  }
  std::string detail = "audited " + std::to_string(functions.size()) +
                       " functions, findings=" + std::to_string(findings.size());
  for (const auto &f : findings) detail += " [" + f + "]";
  detail += " throughput=" + num(pps, 4) + " pkt/s over " +
            std::to_string(trace.size()) + " packets";
  return {findings.empty() && pps >= 100'000, detail};
}

// ---------------------------------------------------------------------------
// 10. Determinism.

struct Artifacts {
  std::map<std::string, std::string> text;
};

Artifacts pipeline_artifacts(const std::filesystem::path &dir) {
  Artifacts a;
  std::filesystem::create_directories(dir);
  Rng rng(31);
  auto spec = testing::five_devices().front();
  const auto device = generate_synthetic_device(spec, 1'800'000'000, rng);
  BackgroundConfig bg;
  bg.rate_pps = testing::device_rate_pps(spec) * 100;
  const auto background = generate_synthetic_background(bg, 1'800'000'000, rng);
  a.text["device.csv"] = write_csv_text(device);
  a.text["background.csv"] = write_csv_text(background);
  MixConfig mix;
  mix.rng_seed = 31;
  const Trace devs[] = {device};
  const auto mixed = mix_traces(devs, background, mix);
  a.text["mixed.csv"] = write_csv_text(mixed);

  TrainingConfig tc;
  tc.rng_seed = 31;
  a.text["embedding.json"] = embedding_to_string(train_embedding(device, background, tc), tc);

  PipelineConfig cfg;
  cfg.device_id = spec.device_id;
  cfg.embedding.rng_seed = 31;
  cfg.split_seed = 31;
  TrainSummary summary;
  const auto model = train_device_model(device, background, &mixed, cfg, &summary);
  save_model(model, dir / "model.json");
  a.text["model.json"] = read_file(dir / "model.json");
  a.text["summary.txt"] = summary.to_text();

  const auto rules = compile(model);
  save_rules(rules, dir / "rules.txt");
  a.text["rules.txt"] = read_file(dir / "rules.txt");

  const CompiledTableSet sets[] = {rules};
  const auto sim = run_trace(mixed, sets);
  write_detections(sim.devices, dir / "detections.csv");
  a.text["detections.csv"] = read_file(dir / "detections.csv");

  const auto windows = windowize(mixed, cfg.t_w_us);
  const auto test = pick(windows, summary.split.test);
  a.text["report.csv"] =
      evaluate(sim.devices[0].detections, mixed, test, spec.device_id).to_csv_row();
  return a;
}

Outcome criterion10() {
  const auto base = std::filesystem::temp_directory_path() / "iotfp-acceptance-determinism";
  std::filesystem::remove_all(base);
  const auto a = pipeline_artifacts(base / "run1");
  const auto b = pipeline_artifacts(base / "run2");
  std::vector<std::string> differing;
  for (const auto &[name, text] : a.text) {
    const auto it = b.text.find(name);
    if (it == b.text.end() || it->second != text || text.empty()) differing.push_back(name);
  }
  std::filesystem::remove_all(base);
  std::string detail = std::to_string(a.text.size()) + " artifacts compared";
  for (const auto &d : differing) detail += ", differs: " + d;
  return {differing.empty(), detail};
}

}  // namespace
}  // namespace iotfp

int main() {
  using namespace iotfp;
  std::map<int, Outcome> out;
  const auto guarded = [&](int id, const std::function<Outcome()> &f) {
    try {
      out[id] = f();
    } catch (const std::exception &e) {
      out[id] = {false, std::string("exception: ") + e.what()};
    }
  };

  std::optional<EndToEnd> nat, vpn;
  try {
    nat = run_end_to_end(MixMode::kNat);
  } catch (const std::exception &e) {
    for (int id : {1, 2, 6, 7, 9}) out[id] = {false, std::string("NAT run: ") + e.what()};
  }
  try {
    vpn = run_end_to_end(MixMode::kVpn);
  } catch (const std::exception &e) {
    out[7] = {false, std::string("VPN run: ") + e.what()};
  }
  if (nat) {
    guarded(1, [&] { return criterion1(*nat); });
    guarded(2, [&] { return criterion2(*nat); });
    guarded(6, [&] { return criterion6(*nat); });
    if (vpn) guarded(7, [&] { return criterion7(*nat, *vpn); });
    guarded(9, [&] { return criterion9(*nat); });
  }
  guarded(3, criterion3);
  guarded(4, criterion4);
  guarded(5, criterion5);
  guarded(8, criterion8);
  guarded(10, criterion10);

  static const char *const kNames[] = {
      "",
      "control/data-plane agreement",
      "quantization error below 1/255",
      "skip-gram gradients match finite differences",
      "embedding co-occurrence",
      "key-packet extraction matches oracle",
      "end-to-end accuracy (NAT, base rate 1:100)",
      "VPN robustness",
      "register safety",
      "integer-only hot path and throughput",
      "byte-identical artifacts",
  };
  int failed = 0;
  for (int id = 1; id <= 10; ++id) {
    const auto &o = out[id];
    failed += !o.pass;
    std::printf("[%s] criterion %d: %s -- %s\n", o.pass ? "PASS" : "FAIL", id,
                kNames[id], o.detail.c_str());
  }
  std::printf("%d/10 criteria passed\n", 10 - failed);
  return failed == 0 ? 0 : 1;
}
