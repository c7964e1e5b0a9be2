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

// Window features and the per-device CART classifier.

#ifndef IOTFP_FINGERPRINT_H_
#define IOTFP_FINGERPRINT_H_

#include <array>
#include <optional>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "iotfp/neighbor_matrix.h"
#include "iotfp/trace.h"

namespace iotfp {

inline constexpr std::size_t kMaxLeaves = 500;
inline constexpr std::int64_t kDefaultWindowUs = 1'000'000;

struct FeatureVector {
  std::vector<double> v;
  std::int64_t window_start_us = 0;
  Ipv4 ip_key = 0;
};

// v[j] = sum over packets p of neighbor_prob(matrix, p, keys[j]).
FeatureVector build_feature_vector(std::span<const DirectionalSize> packets,
                                   const NeighborProbMatrix &matrix,
                                   std::span<const DirectionalSize> keys);

// 1 - sum_i P_i^2. Throws ContractError on an empty node.
double gini(std::span<const std::uint64_t> counts);

struct TreeNode {
  bool leaf = true;
  int feature = -1;
  double threshold = 0;  // left subtree holds v[feature] <= threshold
  int left = -1;
  int right = -1;
  int label = 0;
  std::array<std::uint64_t, 2> counts{};

  friend bool operator==(const TreeNode &, const TreeNode &) = default;
};

// Binary CART tree stored as a flat node list; node 0 is the root.
class DecisionTree {
 public:
  DecisionTree() = default;
  DecisionTree(std::vector<TreeNode> nodes, std::size_t dim);

  const std::vector<TreeNode> &nodes() const { return nodes_; }
  std::size_t dim() const { return dim_; }
  std::size_t leaf_count() const;
  std::size_t depth() const;
  bool empty() const { return nodes_.empty(); }

  // Index of the leaf reached by v. Throws ContractError on a dimension
  // mismatch.
  std::size_t leaf_for(std::span<const double> v) const;
  int predict(std::span<const double> v) const {
    return nodes_[leaf_for(v)].label;
  }

  friend bool operator==(const DecisionTree &, const DecisionTree &) = default;

 private:
  std::vector<TreeNode> nodes_;
  std::size_t dim_ = 0;
};

struct Sample {
  std::vector<double> v;
  int label = 0;  // 0 or 1
};

// Best-first greedy CART on Gini impurity. Candidate thresholds are
// midpoints between consecutive distinct feature values; split scores are
// compared exactly, ties going to the lower feature and then the lower
// threshold, and frontier ties to the older node. Growth stops at
// max_leaves, at pure nodes, or when no split decreases impurity. Throws
// TrainingError on empty input or mixed dimensions.
DecisionTree train_tree(std::span<const Sample> samples,
                        std::size_t max_leaves = kMaxLeaves);

int predict(const DecisionTree &tree, std::span<const double> v);

// One closed window: the LAN host, its start time and the indices of its
// records in the source trace.
struct Window {
  Ipv4 ip_key = 0;
  std::int64_t start_us = 0;
  std::vector<std::size_t> records;
};

// Tumbling per-host windows. A host's window opens at its first packet;
// a packet at or after start + t_w closes the current window and opens the
// next one at its own timestamp.
class Windowizer {
 public:
  explicit Windowizer(std::int64_t t_w_us);

  // Returns the window closed by this packet, if any.
  std::optional<Window> push(std::size_t index, const PacketRecord &r);
  // Closes every open window, ordered by (start, host).
  std::vector<Window> flush();

 private:
  std::int64_t t_w_us_;
  std::unordered_map<Ipv4, Window> open_;
};

std::vector<Window> windowize(const Trace &trace, std::int64_t t_w_us);

std::vector<DirectionalSize> window_sizes(const Trace &trace, const Window &w);

}  // namespace iotfp

#endif  // IOTFP_FINGERPRINT_H_
