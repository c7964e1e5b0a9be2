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

#include "iotfp/fingerprint.h"

#include <algorithm>
#include <numeric>
#include <queue>

#include <boost/multiprecision/cpp_int.hpp>

#include "iotfp/errors.h"

namespace iotfp {

namespace {

using Wide = boost::multiprecision::int256_t;

// Sum of squared class counts over the node size, kept as a fraction.
// Gini-weighted child impurity is n_L + n_R - (sq_L/n_L + sq_R/n_R), so the
// best split maximises sq_L * n_R + sq_R * n_L over n_L * n_R.
struct SplitScore {
  __int128 num = 0;
  __int128 den = 1;

  bool operator>(const SplitScore &o) const { return num * o.den > o.num * den; }
};

__int128 sq(std::uint64_t a, std::uint64_t b) {
  return static_cast<__int128>(a) * a + static_cast<__int128>(b) * b;
}

// Impurity decrease (times the node size), as an exact fraction.
struct Decrease {
  Wide num = 0;
  Wide den = 1;

  bool positive() const { return num > 0; }
  bool operator>(const Decrease &o) const { return num * o.den > o.num * den; }
};

struct Candidate {
  bool valid = false;
  int feature = -1;
  double threshold = 0;
  Decrease decrease;
};

struct Frontier {
  int node = 0;
  std::vector<std::size_t> members;
  Candidate split;
};

std::array<std::uint64_t, 2> count_labels(std::span<const Sample> samples,
                                          const std::vector<std::size_t> &idx) {
  std::array<std::uint64_t, 2> c{};
  for (auto i : idx) ++c[samples[i].label];
  return c;
}

Candidate best_split(std::span<const Sample> samples,
                     const std::vector<std::size_t> &idx, std::size_t dim) {
  Candidate best;
  const auto total = count_labels(samples, idx);
  if (total[0] == 0 || total[1] == 0) return best;
  const std::uint64_t n = idx.size();

  SplitScore best_score;
  bool have = false;
  std::vector<std::size_t> order(idx);
  for (std::size_t f = 0; f < dim; ++f) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return samples[a].v[f] < samples[b].v[f];
                     });
    std::array<std::uint64_t, 2> left{};
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      ++left[samples[order[i]].label];
      const double lo = samples[order[i]].v[f];
      const double hi = samples[order[i + 1]].v[f];
      if (!(lo < hi)) continue;
      const std::uint64_t nl = i + 1;
      const std::uint64_t nr = n - nl;
      const std::array<std::uint64_t, 2> right{total[0] - left[0],
                                               total[1] - left[1]};
      SplitScore s{sq(left[0], left[1]) * nr + sq(right[0], right[1]) * nl,
                   static_cast<__int128>(nl) * nr};
      if (!have || s > best_score) {
        have = true;
        best_score = s;
        double t = lo + (hi - lo) / 2;
        if (!(t < hi)) t = lo;
        best.feature = static_cast<int>(f);
        best.threshold = t;
      }
    }
  }
  if (!have) return best;
  // decrease = score - sq_parent / n
  //          = (score.num * n - sq_parent * score.den) / (score.den * n)
  best.decrease.num = Wide(best_score.num) * Wide(n) -
                      Wide(sq(total[0], total[1])) * Wide(best_score.den);
  best.decrease.den = Wide(best_score.den) * Wide(n);
  best.valid = best.decrease.positive();
  return best;
}

int majority(const std::array<std::uint64_t, 2> &c) {
  return c[1] > c[0] ? 1 : 0;
}

}  // namespace

FeatureVector build_feature_vector(std::span<const DirectionalSize> packets,
                                   const NeighborProbMatrix &matrix,
                                   std::span<const DirectionalSize> keys) {
  FeatureVector fv;
  fv.v.assign(keys.size(), 0.0);
  std::vector<int> key_idx(keys.size());
  for (std::size_t j = 0; j < keys.size(); ++j) key_idx[j] = matrix.index_of(keys[j]);
  for (const auto p : packets) {
    const int i = matrix.index_of(p);
    if (i < 0) continue;
    for (std::size_t j = 0; j < keys.size(); ++j) {
      if (key_idx[j] >= 0) {
        fv.v[j] += matrix.at(static_cast<std::size_t>(i),
                             static_cast<std::size_t>(key_idx[j]));
      }
    }
  }
  return fv;
}

double gini(std::span<const std::uint64_t> counts) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw ContractError("gini of an empty node is undefined");
  double s = 0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    s += p * p;
  }
  return 1.0 - s;
}

DecisionTree::DecisionTree(std::vector<TreeNode> nodes, std::size_t dim)
    : nodes_(std::move(nodes)), dim_(dim) {
  if (nodes_.empty()) throw ContractError("tree needs at least one node");
  const auto n = static_cast<int>(nodes_.size());
  for (const auto &node : nodes_) {
    if (node.leaf) continue;
    if (node.feature < 0 || static_cast<std::size_t>(node.feature) >= dim_ ||
        node.left <= 0 || node.left >= n || node.right <= 0 || node.right >= n) {
      throw ContractError("malformed tree node");
    }
  }
}

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(),
                    [](const TreeNode &n) { return n.leaf; }));
}

std::size_t DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::size_t best = 0;
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    const auto &node = nodes_[id];
    if (!node.leaf) {
      stack.push_back({node.left, d + 1});
      stack.push_back({node.right, d + 1});
    }
  }
  return best;
}

std::size_t DecisionTree::leaf_for(std::span<const double> v) const {
  if (v.size() != dim_) {
    throw ContractError("feature dimension " + std::to_string(v.size()) +
                        " does not match tree dimension " +
                        std::to_string(dim_));
  }
  std::size_t id = 0;
  while (!nodes_[id].leaf) {
    const auto &node = nodes_[id];
    id = static_cast<std::size_t>(v[node.feature] <= node.threshold ? node.left
                                                                    : node.right);
  }
  return id;
}

DecisionTree train_tree(std::span<const Sample> samples,
                        std::size_t max_leaves) {
  if (samples.empty()) throw TrainingError("no training samples");
  if (max_leaves == 0) throw TrainingError("max_leaves must be positive");
  if (samples.size() > 10'000'000) throw TrainingError("too many samples");
  const std::size_t dim = samples.front().v.size();
  for (const auto &s : samples) {
    if (s.v.size() != dim) throw TrainingError("samples have mixed dimensions");
    if (s.label != 0 && s.label != 1) throw TrainingError("labels must be 0 or 1");
  }

  std::vector<TreeNode> nodes(1);
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), 0);
  nodes[0].counts = count_labels(samples, all);
  nodes[0].label = majority(nodes[0].counts);

  auto cmp = [](const Frontier &a, const Frontier &b) {
    if (a.split.decrease > b.split.decrease) return false;
    if (b.split.decrease > a.split.decrease) return true;
    return a.node > b.node;  // older node first
  };
  std::priority_queue<Frontier, std::vector<Frontier>, decltype(cmp)> frontier(cmp);
  {
    Frontier root{0, std::move(all), {}};
    root.split = best_split(samples, root.members, dim);
    if (root.split.valid) frontier.push(std::move(root));
  }

  std::size_t leaves = 1;
  while (!frontier.empty() && leaves < max_leaves) {
    Frontier top = frontier.top();
    frontier.pop();
    const int f = top.split.feature;
    const double t = top.split.threshold;
    std::vector<std::size_t> left_idx;
    std::vector<std::size_t> right_idx;
    for (auto i : top.members) {
      (samples[i].v[f] <= t ? left_idx : right_idx).push_back(i);
    }
    const int left_id = static_cast<int>(nodes.size());
    const int right_id = left_id + 1;
    nodes.resize(nodes.size() + 2);
    auto &parent = nodes[top.node];
    parent.leaf = false;
    parent.feature = f;
    parent.threshold = t;
    parent.left = left_id;
    parent.right = right_id;
    for (auto [id, idx] : {std::pair{left_id, &left_idx},
                           std::pair{right_id, &right_idx}}) {
      nodes[id].counts = count_labels(samples, *idx);
      nodes[id].label = majority(nodes[id].counts);
      Frontier child{id, std::move(*idx), {}};
      child.split = best_split(samples, child.members, dim);
      if (child.split.valid) frontier.push(std::move(child));
    }
    ++leaves;
  }
  return DecisionTree(std::move(nodes), dim);
}

int predict(const DecisionTree &tree, std::span<const double> v) {
  return tree.predict(v);
}

Windowizer::Windowizer(std::int64_t t_w_us) : t_w_us_(t_w_us) {
  if (t_w_us <= 0) throw ConfigError("window length must be positive");
}

std::optional<Window> Windowizer::push(std::size_t index, const PacketRecord &r) {
  const Ipv4 host = host_address(r);
  auto it = open_.find(host);
  if (it == open_.end()) {
    open_.emplace(host, Window{host, r.timestamp_us, {index}});
    return std::nullopt;
  }
  std::optional<Window> closed;
  if (r.timestamp_us - it->second.start_us >= t_w_us_) {
    closed = std::move(it->second);
    it->second = Window{host, r.timestamp_us, {}};
  }
  it->second.records.push_back(index);
  return closed;
}

std::vector<Window> Windowizer::flush() {
  std::vector<Window> out;
  out.reserve(open_.size());
  for (auto &[host, w] : open_) out.push_back(std::move(w));
  open_.clear();
  std::sort(out.begin(), out.end(), [](const Window &a, const Window &b) {
    if (a.start_us != b.start_us) return a.start_us < b.start_us;
    return a.ip_key < b.ip_key;
  });
  return out;
}

std::vector<Window> windowize(const Trace &trace, std::int64_t t_w_us) {
  Windowizer wz(t_w_us);
  std::vector<Window> out;
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    if (auto w = wz.push(i, trace.records[i])) out.push_back(std::move(*w));
  }
  for (auto &w : wz.flush()) out.push_back(std::move(w));
  return out;
}

std::vector<DirectionalSize> window_sizes(const Trace &trace, const Window &w) {
  std::vector<DirectionalSize> sizes;
  sizes.reserve(w.records.size());
  for (auto i : w.records) sizes.push_back(directional_size(trace.records[i]));
  return sizes;
}

}  // namespace iotfp
