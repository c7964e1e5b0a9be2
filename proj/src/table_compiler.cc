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

#include "iotfp/table_compiler.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "iotfp/errors.h"

namespace iotfp {

namespace {

constexpr std::uint32_t kU32Max = std::numeric_limits<std::uint32_t>::max();

constexpr std::string_view kDirectionTable = "directional_packet_size";
constexpr std::string_view kProbTable = "packet_size_to_prob";
constexpr std::string_view kInferenceTable = "node";

template <typename T>
T to_number(std::string_view s, std::size_t line) {
  T out{};
  const auto *end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (s.empty() || ec != std::errc() || ptr != end) {
    throw ParseError("bad number '" + std::string(s) + "'", line);
  }
  return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos
                                      ? std::string_view::npos
                                      : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

struct Field {
  std::string_view name;
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;
};

struct RuleLine {
  std::string_view table;
  int priority = 0;
  std::vector<Field> match;
  std::string_view action;
  std::vector<std::uint64_t> args;
};

RuleLine parse_rule_line(std::string_view line, std::size_t line_no) {
  RuleLine r;
  bool have_table = false;
  bool have_action = false;
  for (auto tok : split(line, ' ')) {
    if (tok.empty()) continue;
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("token without '=': " + std::string(tok), line_no);
    }
    const auto key = tok.substr(0, eq);
    const auto val = tok.substr(eq + 1);
    if (key == "table") {
      r.table = val;
      have_table = true;
    } else if (key == "priority") {
      r.priority = to_number<int>(val, line_no);
    } else if (key == "match") {
      for (auto f : split(val, ',')) {
        const auto colon = f.find(':');
        const auto dots = f.find("..");
        if (colon == std::string_view::npos || dots == std::string_view::npos ||
            dots < colon) {
          throw ParseError("bad match field '" + std::string(f) + "'", line_no);
        }
        r.match.push_back({f.substr(0, colon),
                           to_number<std::uint32_t>(
                               f.substr(colon + 1, dots - colon - 1), line_no),
                           to_number<std::uint32_t>(f.substr(dots + 2), line_no)});
      }
    } else if (key == "action") {
      const auto open = val.find('(');
      if (open == std::string_view::npos || val.back() != ')') {
        throw ParseError("bad action '" + std::string(val) + "'", line_no);
      }
      r.action = val.substr(0, open);
      const auto inner = val.substr(open + 1, val.size() - open - 2);
      if (!inner.empty()) {
        for (auto a : split(inner, ',')) {
          r.args.push_back(to_number<std::uint64_t>(a, line_no));
        }
      }
      have_action = true;
    } else {
      throw ParseError("unknown key '" + std::string(key) + "'", line_no);
    }
  }
  if (!have_table || !have_action) {
    throw ParseError("rule needs table= and action=", line_no);
  }
  return r;
}

}  // namespace

std::uint8_t quantize_prob(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ContractError("probability outside [0, 1]");
  }
  return static_cast<std::uint8_t>(std::floor(p * kQuantScale));
}

bool InferenceRule::matches(std::span<const std::uint32_t> v) const {
  if (v.size() != ranges.size()) return false;
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (v[j] < ranges[j].first || v[j] > ranges[j].second) return false;
  }
  return true;
}

ProbabilityTable compile_probability_table(const DeviceFingerprintModel &model) {
  ProbabilityTable table;
  const auto keys = model.keys();
  table.dims = keys.size();
  for (const auto size : model.matrix.sizes()) {
    std::vector<std::uint8_t> row(keys.size());
    for (std::size_t j = 0; j < keys.size(); ++j) {
      row[j] = quantize_prob(neighbor_prob(model.matrix, size, keys[j]));
    }
    table.rows.emplace(size.value(), std::move(row));
  }
  return table;
}

std::vector<InferenceRule> tree_to_rules(const DecisionTree &tree) {
  if (tree.empty()) throw CompileError("cannot compile an empty tree");
  if (tree.leaf_count() > kMaxLeaves) {
    throw CompileError("tree has " + std::to_string(tree.leaf_count()) +
                       " leaves; the inference stage holds at most 500");
  }
  std::vector<InferenceRule> rules;
  struct Item {
    int node;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges;
    bool feasible;
  };
  std::vector<Item> stack;
  stack.push_back(
      {0, std::vector<std::pair<std::uint32_t, std::uint32_t>>(tree.dim(), {0, kU32Max}),
       true});
  // Depth-first, left before right, so rules come out in leaf order.
  while (!stack.empty()) {
    Item item = std::move(stack.back());
    stack.pop_back();
    const auto &node = tree.nodes()[item.node];
    if (node.leaf) {
      if (item.feasible) {
        rules.push_back({static_cast<int>(rules.size()), std::move(item.ranges),
                         node.label});
      }
      continue;
    }
    const double t = std::floor(node.threshold);
    const auto f = static_cast<std::size_t>(node.feature);
    Item left = item;
    Item right = std::move(item);
    left.node = node.left;
    right.node = node.right;
    // left: v <= floor(t); right: v >= floor(t) + 1
    if (t < 0) {
      left.feasible = false;
    } else if (t < static_cast<double>(kU32Max)) {
      const auto cut = static_cast<std::uint32_t>(t);
      left.ranges[f].second = std::min(left.ranges[f].second, cut);
      right.ranges[f].first = std::max(right.ranges[f].first, cut + 1);
    } else {
      right.feasible = false;
    }
    if (left.ranges[f].first > left.ranges[f].second) left.feasible = false;
    if (right.ranges[f].first > right.ranges[f].second) right.feasible = false;
    stack.push_back(std::move(right));
    stack.push_back(std::move(left));
  }
  return rules;
}

int match_rules(std::span<const InferenceRule> rules,
                std::span<const std::uint32_t> v) {
  for (std::size_t i = 0; i < rules.size(); ++i) {
    if (rules[i].matches(v)) return static_cast<int>(i);
  }
  return -1;
}

CompiledTableSet compile(const DeviceFingerprintModel &model,
                         const CompileOptions &opts) {
  if (model.key_packets.empty()) throw CompileError("model has no key packets");
  if (model.quantized_tree.dim() != model.dim()) {
    throw CompileError("quantized tree dimension does not match the key count");
  }
  if (opts.ip_size == 0 || opts.ip_size > 65536) {
    throw CompileError("ip_size must lie in [1, 65536]");
  }
  if (model.device_id.empty() ||
      model.device_id.find_first_of(" \t\r\n") != std::string::npos) {
    throw CompileError("device id must be non-empty without whitespace");
  }
  if (model.t_w_us <= 0 || model.t_w_us > static_cast<std::int64_t>(kU32Max)) {
    throw CompileError("window length must fit a 32-bit timestamp delta");
  }
  CompiledTableSet set;
  set.device_id = model.device_id;
  set.t_w_us = model.t_w_us;
  set.keys = model.keys();
  set.direction_rules = {DirectionRule{Direction::kLanToWan, 0},
                         DirectionRule{Direction::kWanToLan, kMtu}};
  set.probability = compile_probability_table(model);
  set.inference_rules = tree_to_rules(model.quantized_tree);
  set.register_spec = {32, model.dim(), opts.ip_size};
  return set;
}

std::vector<std::uint32_t> quantized_feature_vector(
    std::span<const DirectionalSize> packets, const ProbabilityTable &table) {
  std::vector<std::uint32_t> v(table.dims, 0);
  for (const auto p : packets) {
    const auto it = table.rows.find(p.value());
    if (it == table.rows.end()) continue;
    for (std::size_t j = 0; j < table.dims; ++j) v[j] += it->second[j];
  }
  return v;
}

std::string rules_to_string(const CompiledTableSet &set) {
  std::ostringstream out;
  out << "# iotfp-rules version=1\n";
  out << "# device_id=" << set.device_id << "\n";
  out << "# dims=" << set.dims() << "\n";
  out << "# ip_slots=" << set.register_spec.ip_slots << "\n";
  out << "# register_width=" << set.register_spec.width_bits << "\n";
  out << "# tw_us=" << set.t_w_us << "\n";
  out << "# keys=";
  for (std::size_t i = 0; i < set.keys.size(); ++i) {
    out << (i ? "," : "") << set.keys[i].value();
  }
  out << "\n";

  for (std::size_t i = 0; i < set.direction_rules.size(); ++i) {
    const auto &r = set.direction_rules[i];
    const int dir = static_cast<int>(r.direction);
    out << "table=" << kDirectionTable << " priority=" << i
        << " match=direction:" << dir << ".." << dir
        << " action=set_dir_size(" << r.offset << ")\n";
  }
  const auto write_probs = [&out](std::span<const std::uint8_t> row) {
    out << "action=set_meta_prob(";
    for (std::size_t j = 0; j < row.size(); ++j) {
      out << (j ? "," : "") << static_cast<int>(row[j]);
    }
    out << ")\n";
  };
  // Priority 0 catch-all is the table's default action.
  out << "table=" << kProbTable << " priority=0 match=dir_size:0..65535 ";
  write_probs(std::vector<std::uint8_t>(set.probability.dims, 0));
  for (const auto &[size, row] : set.probability.rows) {
    out << "table=" << kProbTable << " priority=1 match=dir_size:" << size
        << ".." << size << " ";
    write_probs(row);
  }
  for (const auto &rule : set.inference_rules) {
    out << "table=" << kInferenceTable << " priority=" << rule.priority
        << " match=timeout:1..1";
    for (std::size_t j = 0; j < rule.ranges.size(); ++j) {
      out << ",v_" << (j + 1) << ":" << rule.ranges[j].first << ".."
          << rule.ranges[j].second;
    }
    out << " action=set_label(" << rule.label << ")\n";
  }
  return out.str();
}

CompiledTableSet rules_from_string(const std::string &text) {
  CompiledTableSet set;
  bool have_magic = false;
  bool have_dims = false;
  bool have_default = false;
  std::size_t direction_rules = 0;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.starts_with("#")) {
      line.remove_prefix(1);
      while (line.starts_with(" ")) line.remove_prefix(1);
      if (line.starts_with("iotfp-rules")) {
        if (line != "iotfp-rules version=1") {
          throw ParseError("unsupported rule file version", line_no);
        }
        have_magic = true;
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) continue;
      const auto key = line.substr(0, eq);
      const auto val = line.substr(eq + 1);
      if (key == "device_id") {
        set.device_id = std::string(val);
      } else if (key == "dims") {
        set.register_spec.dims = to_number<std::size_t>(val, line_no);
        set.probability.dims = set.register_spec.dims;
        have_dims = true;
      } else if (key == "ip_slots") {
        set.register_spec.ip_slots = to_number<std::uint32_t>(val, line_no);
      } else if (key == "register_width") {
        set.register_spec.width_bits = to_number<int>(val, line_no);
      } else if (key == "tw_us") {
        set.t_w_us = to_number<std::int64_t>(val, line_no);
      } else if (key == "keys") {
        if (!val.empty()) {
          for (auto k : split(val, ',')) {
            try {
              set.keys.emplace_back(to_number<int>(k, line_no));
            } catch (const RangeError &e) {
              throw ParseError(e.what(), line_no);
            }
          }
        }
      }
      continue;
    }
    if (!have_magic || !have_dims) {
      throw ParseError("rule before the rule-file header", line_no);
    }
    const auto r = parse_rule_line(line, line_no);
    const std::size_t n = set.dims();
    if (r.table == kDirectionTable) {
      if (r.match.size() != 1 || r.match[0].name != "direction" ||
          r.match[0].lo != r.match[0].hi || r.match[0].lo > 1 ||
          r.action != "set_dir_size" || r.args.size() != 1 ||
          direction_rules >= 2) {
        throw ParseError("bad direction rule", line_no);
      }
      set.direction_rules[direction_rules++] = {
          static_cast<Direction>(r.match[0].lo),
          static_cast<std::uint16_t>(r.args[0])};
    } else if (r.table == kProbTable) {
      if (r.match.size() != 1 || r.match[0].name != "dir_size" ||
          r.action != "set_meta_prob" || r.args.size() != n) {
        throw ParseError("bad probability rule", line_no);
      }
      std::vector<std::uint8_t> row(n);
      for (std::size_t j = 0; j < n; ++j) {
        if (r.args[j] > 255) throw ParseError("probability above 255", line_no);
        row[j] = static_cast<std::uint8_t>(r.args[j]);
      }
      if (r.priority == 0) {
        if (std::any_of(row.begin(), row.end(), [](auto x) { return x != 0; })) {
          throw ParseError("default probability row must be zero", line_no);
        }
        have_default = true;
      } else {
        if (r.match[0].lo != r.match[0].hi) {
          throw ParseError("probability rules are exact matches", line_no);
        }
        set.probability.rows[static_cast<int>(r.match[0].lo)] = std::move(row);
      }
    } else if (r.table == kInferenceTable) {
      if (r.match.size() != n + 1 || r.match[0].name != "timeout" ||
          r.match[0].lo != 1 || r.match[0].hi != 1 || r.action != "set_label" ||
          r.args.size() != 1 || r.args[0] > 1) {
        throw ParseError("bad inference rule", line_no);
      }
      InferenceRule rule;
      rule.priority = r.priority;
      for (std::size_t j = 1; j < r.match.size(); ++j) {
        rule.ranges.emplace_back(r.match[j].lo, r.match[j].hi);
      }
      rule.label = static_cast<int>(r.args[0]);
      set.inference_rules.push_back(std::move(rule));
    } else {
      throw ParseError("unknown table '" + std::string(r.table) + "'", line_no);
    }
  }
  if (!have_magic) throw ParseError("missing iotfp-rules header");
  if (direction_rules != 2) throw ParseError("expected two direction rules");
  if (!have_default) throw ParseError("missing default probability rule");
  if (set.keys.size() != set.dims()) {
    throw ParseError("key list does not match dims");
  }
  if (set.inference_rules.empty() || set.inference_rules.size() > kMaxLeaves) {
    throw ParseError("inference table must hold 1..500 rules");
  }
  return set;
}

void save_rules(const CompiledTableSet &set, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << rules_to_string(set);
}

CompiledTableSet load_rules(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return rules_from_string(ss.str());
}

}  // namespace iotfp
