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

// iotfp: train, compile, simulate, evaluate, generate, mix.
//
// Exit codes: 0 success, 1 a pipeline stage failed, 2 bad command line or
// unreadable input.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "iotfp/dataplane.h"
#include "iotfp/errors.h"
#include "iotfp/harness.h"
#include "iotfp/model.h"
#include "iotfp/pipeline.h"
#include "iotfp/table_compiler.h"
#include "iotfp/trace.h"

namespace iotfp {
namespace {

namespace fs = std::filesystem;

struct InputError : Error {
  using Error::Error;
};

// Subcommand being run, for error messages.
std::string g_command = "iotfp";

Trace read_trace(const std::string &path, const std::vector<std::string> &lan) {
  if (fs::path(path).extension() == ".pcap") {
    std::vector<Cidr> prefixes;
    for (const auto &p : lan) prefixes.push_back(Cidr::parse(p));
    if (prefixes.empty()) prefixes = default_lan_prefixes();
    PcapStats stats;
    auto t = parse_pcap(path, prefixes, &stats);
    if (stats.skipped) {
      std::cerr << "note: " << path << ": skipped " << stats.skipped << " of "
                << stats.frames << " frames\n";
    }
    return t;
  }
  CsvStats stats;
  auto t = parse_csv(path, &stats);
  if (stats.reordered) {
    std::cerr << "warning: " << path << ": re-sorted " << stats.reordered
              << " out-of-order rows\n";
  }
  return t;
}

template <typename F>
auto input(const std::string &flag, F &&f) -> decltype(f()) {
  try {
    return f();
  } catch (const IoError &e) {
    throw InputError(flag + ": " + e.what());
  }
}

// Burst spec: "s1,s2,...@period_us[~jitter]" items separated by ';'.
std::vector<BurstSpec> parse_bursts(const std::string &text) {
  std::vector<BurstSpec> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(';', start);
    if (end == std::string::npos) end = text.size();
    const auto item = text.substr(start, end - start);
    start = end + 1;
    if (item.empty()) continue;
    const auto at = item.find('@');
    if (at == std::string::npos) throw ConfigError("burst spec needs '@period': " + item);
    BurstSpec b;
    std::size_t s = 0;
    const auto sizes = item.substr(0, at);
    while (s <= sizes.size()) {
      auto e = sizes.find(',', s);
      if (e == std::string::npos) e = sizes.size();
      b.sizes.emplace_back(std::stoi(sizes.substr(s, e - s)));
      s = e + 1;
    }
    const auto rest = item.substr(at + 1);
    const auto tilde = rest.find('~');
    b.period_us = std::stoll(rest.substr(0, tilde));
    if (tilde != std::string::npos) b.jitter = std::stod(rest.substr(tilde + 1));
    out.push_back(std::move(b));
  }
  if (out.empty()) throw ConfigError("empty burst spec");
  return out;
}

// Splices "key=value" lines from a --config file in front of the
// subcommand's own flags; options take their last value, so flags win.
std::vector<std::string> expand_config(int argc, char **argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw InputError("--config: cannot open " + path);
  std::vector<std::string> extra;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError("--config: line " + std::to_string(line_no) + " is not key=value");
    }
    const auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t\r");
      const auto e = v.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    extra.push_back("--" + trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
  }
  // Insert right after the subcommand name.
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i].rfind("-", 0) != 0) {
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(i) + 1, extra.begin(),
                  extra.end());
      break;
    }
  }
  return args;
}

std::string first_label(const Trace &t) {
  for (const auto &r : t.records) {
    if (r.device_label) return *r.device_label;
  }
  return {};
}

int run(int argc, char **argv) {
  CLI::App app{"IoT device fingerprinting: offline training, table compilation "
               "and data-plane simulation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "iotfp 1.0");
  std::vector<std::string> lan;
  app.add_option("--lan-prefix", lan, "LAN CIDR for pcap input (repeatable)")
      ->take_all();

  // train -------------------------------------------------------------------
  auto *train = app.add_subcommand("train", "Build a device fingerprint model");
  std::string device_trace, background_trace, mix_trace, model_out, device_id;
  PipelineConfig pc;
  train->add_option("--device-trace", device_trace, "Device capture (CSV or pcap)")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--background", background_trace, "Background capture")
      ->check(CLI::ExistingFile);
  train->add_option("--mix", mix_trace, "Labelled mixed trace to cut windows from")
      ->check(CLI::ExistingFile);
  train->add_option("--out", model_out, "Model file to write")->required();
  train->add_option("--device-id", device_id, "Defaults to the trace's label");
  train->add_option("--tw-us", pc.t_w_us, "Window length (us)")->capture_default_str();
  train->add_option("--n-keys", pc.n_keys, "Key packets N")->capture_default_str();
  train->add_option("--lambda", pc.lambda, "Similarity threshold")->capture_default_str();
  train->add_option("--min-freq", pc.min_freq, "Vocabulary frequency floor")
      ->capture_default_str();
  train->add_option("--tb-us", pc.extraction.t_b_us, "Burst gap threshold (us)")
      ->capture_default_str();
  train->add_option("--eta", pc.extraction.eta, "Periodicity threshold on cv")
      ->capture_default_str();
  train->add_option("--min-bursts", pc.extraction.min_bursts, "Bursts needed (strict)")
      ->capture_default_str();
  train->add_option("--dim", pc.embedding.d, "Embedding dimension")->capture_default_str();
  train->add_option("--context", pc.embedding.c, "Context radius")->capture_default_str();
  train->add_option("--negatives", pc.embedding.k, "Negatives per relevant packet")
      ->capture_default_str();
  train->add_option("--epochs", pc.embedding.epochs, "Training epochs")
      ->capture_default_str();
  train->add_option("--learning-rate", pc.embedding.learning_rate, "Initial rate")
      ->capture_default_str();
  train->add_option("--max-leaves", pc.max_leaves, "Tree leaf cap")->capture_default_str();
  std::uint64_t train_seed = 1;
  train->add_option("--seed", train_seed, "Seed for embedding, split and NAT ports")
      ->capture_default_str();
  train->add_flag("--keep-embedding", pc.keep_embedding, "Store the embedding table");

  // compile -----------------------------------------------------------------
  auto *comp = app.add_subcommand("compile", "Lower a model to match-action rules");
  std::string model_in, rules_out;
  CompileOptions copts;
  comp->add_option("--model", model_in, "Model file")->required()->check(CLI::ExistingFile);
  comp->add_option("--out", rules_out, "Rule file to write")->required();
  comp->add_option("--ip-size", copts.ip_size, "Register slots")->capture_default_str();

  // simulate ----------------------------------------------------------------
  auto *sim = app.add_subcommand("simulate", "Run rule files over a trace");
  std::vector<std::string> rules_in;
  std::string sim_trace, det_out, trigger = "opens";
  RunOptions ropts;
  sim->add_option("--rules", rules_in, "Rule files (one per device)")
      ->required()
      ->check(CLI::ExistingFile)
      ->take_all();
  sim->add_option("--trace", sim_trace, "Trace to replay")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", det_out, "Detection CSV to write")->required();
  sim->add_option("--jobs", ropts.jobs, "Worker threads")->capture_default_str();
  sim->add_option("--trigger", trigger, "Window the timeout packet joins")
      ->check(CLI::IsMember({"opens", "closes"}))
      ->capture_default_str();
  sim->add_flag("--debug-check", ropts.sim.debug_check, "Cross-check registers");

  // evaluate ----------------------------------------------------------------
  auto *ev = app.add_subcommand("evaluate", "Score detections against ground truth");
  std::string det_in, truth_trace, report_out, eval_device;
  std::int64_t eval_tw = kDefaultWindowUs;
  ev->add_option("--detections", det_in, "Detection CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--trace", truth_trace, "Labelled trace")->required()->check(CLI::ExistingFile);
  ev->add_option("--tw-us", eval_tw, "Window length (us)")->capture_default_str();
  ev->add_option("--device-id", eval_device, "Only this device");
  ev->add_option("--out", report_out, "Report CSV to write");

  // generate ----------------------------------------------------------------
  auto *gen = app.add_subcommand("generate", "Synthesise device or background traffic");
  std::string kind = "device", bursts, gen_out, gen_id = "device", lan_ip = "192.168.1.2";
  double duration_s = 3600;
  std::uint64_t gen_seed = 1;
  BackgroundConfig bg;
  gen->add_option("--kind", kind, "device or background")
      ->check(CLI::IsMember({"device", "background"}))
      ->capture_default_str();
  gen->add_option("--bursts", bursts, "Device bursts: s1,s2@period_us~jitter;...");
  gen->add_option("--device-id", gen_id, "Label for device packets")->capture_default_str();
  gen->add_option("--lan-ip", lan_ip, "Device address")->capture_default_str();
  gen->add_option("--rate-pps", bg.rate_pps, "Background packet rate")->capture_default_str();
  gen->add_option("--duration-s", duration_s, "Trace length (s)")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
  gen->add_option("--out", gen_out, "CSV to write")->required();

  // mix ---------------------------------------------------------------------
  auto *mix = app.add_subcommand("mix", "Replay devices and background through a middlebox");
  std::vector<std::string> mix_devices;
  std::string mix_background, mix_out, mode = "nat", nat_ip = "10.0.0.1";
  MixConfig mcfg;
  mix->add_option("--device-trace", mix_devices, "Labelled device captures")
      ->check(CLI::ExistingFile)
      ->take_all();
  mix->add_option("--background", mix_background, "Background capture")
      ->check(CLI::ExistingFile);
  mix->add_option("--mode", mode, "nat or vpn")
      ->check(CLI::IsMember({"nat", "vpn"}))
      ->capture_default_str();
  mix->add_option("--nat-ip", nat_ip, "NAT external address")->capture_default_str();
  mix->add_option("--vpn-overhead", mcfg.vpn_overhead_bytes, "Tunnel bytes per packet")
      ->capture_default_str();
  mix->add_option("--seed", mcfg.rng_seed, "Port translation seed")->capture_default_str();
  mix->add_option("--out", mix_out, "CSV to write")->required();

  std::string config_path;
  for (auto *sub : app.get_subcommands({})) {
    sub->add_option("--config", config_path, "key=value file; flags take precedence")
        ->check(CLI::ExistingFile);
    for (auto *opt : sub->get_options()) {
      if (opt->get_items_expected_max() == 1) {
        opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
      }
    }
  }
  const auto args = expand_config(argc, argv);
  std::vector<char *> cargs;
  for (const auto &a : args) cargs.push_back(const_cast<char *>(a.c_str()));

  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::Success &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  }

  if (*train) {
    g_command = train->get_name();
    const auto device = input("--device-trace", [&] { return read_trace(device_trace, lan); });
    const auto background = background_trace.empty()
                                ? Trace{}
                                : input("--background", [&] {
                                    return read_trace(background_trace, lan);
                                  });
    std::optional<Trace> mixed;
    if (!mix_trace.empty()) {
      mixed = input("--mix", [&] { return read_trace(mix_trace, lan); });
    }
    pc.device_id = !device_id.empty() ? device_id : first_label(device);
    if (pc.device_id.empty()) pc.device_id = fs::path(device_trace).stem().string();
    pc.embedding.rng_seed = train_seed;
    pc.split_seed = train_seed;
    pc.mix.rng_seed = train_seed;
    TrainSummary summary;
    const auto model = train_device_model(device, background,
                                          mixed ? &*mixed : nullptr, pc, &summary);
    save_model(model, model_out);
    std::cout << "device=" << model.device_id << "\n" << summary.to_text();
    return 0;
  }
  if (*comp) {
    g_command = comp->get_name();
    const auto model = load_model(model_in);
    const auto set = compile(model, copts);
    save_rules(set, rules_out);
    std::cout << "directional_packet_size: " << set.direction_rules.size() << " rules\n"
              << "packet_size_to_prob: " << set.probability.rows.size() + 1
              << " rules (incl. default)\n"
              << "node: " << set.inference_rules.size() << " rules\n"
              << "registers: " << set.register_spec.ip_slots << " x "
              << set.dims() << " x " << set.register_spec.width_bits << " bit\n";
    return 0;
  }
  if (*sim) {
    g_command = sim->get_name();
    std::vector<CompiledTableSet> sets;
    for (const auto &r : rules_in) sets.push_back(load_rules(r));
    const auto trace = input("--trace", [&] { return read_trace(sim_trace, lan); });
    ropts.sim.trigger =
        trigger == "opens" ? TriggerPolicy::kOpensWindow : TriggerPolicy::kClosesWindow;
    const auto result = run_trace(trace, sets, ropts);
    write_detections(result.devices, det_out);
    std::cout << stats_summary(result);
    return 0;
  }
  if (*ev) {
    g_command = ev->get_name();
    const auto detections = read_detections(det_in);
    const auto trace = input("--trace", [&] { return read_trace(truth_trace, lan); });
    if (first_label(trace).empty()) {
      throw StageError("evaluate", "trace carries no device labels");
    }
    std::set<std::string> devices;
    if (!eval_device.empty()) {
      devices.insert(eval_device);
    } else {
      for (const auto &d : detections) devices.insert(d.device_id);
    }
    if (devices.empty()) throw StageError("evaluate", "no detections to score");
    const auto windows = windowize(trace, eval_tw);
    std::string csv = EvalReport::csv_header() + "\n";
    for (const auto &id : devices) {
      const auto report = evaluate(detections, trace, windows, id);
      std::cout << report.to_text() << "\n";
      csv += report.to_csv_row() + "\n";
    }
    if (!report_out.empty()) {
      std::ofstream out(report_out, std::ios::binary);
      if (!out) throw IoError("cannot write " + report_out);
      out << csv;
    }
    return 0;
  }
  if (*gen) {
    g_command = gen->get_name();
    Rng rng(gen_seed);
    const auto duration = static_cast<std::int64_t>(duration_s * 1e6);
    Trace t;
    if (kind == "device") {
      if (bursts.empty()) throw ConfigError("--bursts is required for --kind device");
      DeviceSpec spec;
      spec.device_id = gen_id;
      spec.lan_ip = parse_ipv4(lan_ip);
      spec.bursts = parse_bursts(bursts);
      t = generate_synthetic_device(spec, duration, rng);
    } else {
      t = generate_synthetic_background(bg, duration, rng);
    }
    write_csv(t, gen_out);
    std::cout << "wrote " << t.size() << " packets to " << gen_out << "\n";
    return 0;
  }
  if (*mix) {
    g_command = mix->get_name();
    std::vector<Trace> devices;
    for (const auto &p : mix_devices) {
      devices.push_back(input("--device-trace", [&] { return read_trace(p, lan); }));
    }
    const auto background = mix_background.empty()
                                ? Trace{}
                                : input("--background", [&] {
                                    return read_trace(mix_background, lan);
                                  });
    mcfg.mode = mode == "nat" ? MixMode::kNat : MixMode::kVpn;
    mcfg.nat_ip = parse_ipv4(nat_ip);
    const auto out = mix_traces(devices, background, mcfg);
    write_csv(out, mix_out);
    std::cout << "wrote " << out.size() << " packets to " << mix_out << "\n";
    return 0;
  }
  return 2;
}

}  // namespace
}  // namespace iotfp

int main(int argc, char **argv) {
  try {
    return iotfp::run(argc, argv);
  } catch (const iotfp::InputError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const iotfp::StageError &e) {
    std::cerr << "error: stage " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: stage " << iotfp::g_command << ": " << e.what() << "\n";
    return 1;
  }
}
