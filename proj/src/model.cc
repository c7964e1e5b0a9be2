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

#include "iotfp/model.h"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "iotfp/errors.h"

namespace iotfp {

namespace {

using nlohmann::json;

json cfg_json(const TrainingConfig &cfg) {
  return {{"c", cfg.c},
          {"k", cfg.k},
          {"d", cfg.d},
          {"learning_rate", cfg.learning_rate},
          {"epochs", cfg.epochs},
          {"rng_seed", cfg.rng_seed},
          {"t_b_us", cfg.t_b_us}};
}

TrainingConfig cfg_from(const json &j) {
  TrainingConfig cfg;
  cfg.c = j.at("c").get<int>();
  cfg.k = j.at("k").get<int>();
  cfg.d = j.at("d").get<int>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  cfg.t_b_us = j.at("t_b_us").get<std::int64_t>();
  return cfg;
}

json tree_json(const DecisionTree &tree) {
  json nodes = json::array();
  for (std::size_t i = 0; i < tree.nodes().size(); ++i) {
    const auto &n = tree.nodes()[i];
    json jn = {{"id", i}, {"kind", n.leaf ? "leaf" : "split"}};
    if (n.leaf) {
      jn["label"] = n.label;
    } else {
      jn["feature"] = n.feature;
      jn["threshold"] = n.threshold;
      jn["left"] = n.left;
      jn["right"] = n.right;
      jn["label"] = n.label;
    }
    jn["counts"] = {n.counts[0], n.counts[1]};
    nodes.push_back(std::move(jn));
  }
  return {{"dim", tree.dim()}, {"nodes", std::move(nodes)}};
}

DecisionTree tree_from(const json &j) {
  std::vector<TreeNode> nodes;
  for (const auto &jn : j.at("nodes")) {
    if (jn.at("id").get<std::size_t>() != nodes.size()) {
      throw ParseError("tree node ids must be dense and ordered");
    }
    TreeNode n;
    const auto kind = jn.at("kind").get<std::string>();
    if (kind == "leaf") {
      n.leaf = true;
    } else if (kind == "split") {
      n.leaf = false;
      n.feature = jn.at("feature").get<int>();
      n.threshold = jn.at("threshold").get<double>();
      n.left = jn.at("left").get<int>();
      n.right = jn.at("right").get<int>();
    } else {
      throw ParseError("unknown tree node kind '" + kind + "'");
    }
    n.label = jn.at("label").get<int>();
    n.counts = {jn.at("counts").at(0).get<std::uint64_t>(),
                jn.at("counts").at(1).get<std::uint64_t>()};
    nodes.push_back(n);
  }
  return DecisionTree(std::move(nodes), j.at("dim").get<std::size_t>());
}

json embedding_json(const EmbeddingTable &table, const TrainingConfig &cfg) {
  return {{"version", kModelFormatVersion},
          {"K", EmbeddingTable::kRows},
          {"d", table.dim()},
          {"cfg", cfg_json(cfg)},
          {"matrix", table.data()}};
}

EmbeddingTable embedding_from(const json &j, TrainingConfig *cfg) {
  if (j.at("K").get<int>() != EmbeddingTable::kRows) {
    throw ParseError("embedding K must be 3000");
  }
  EmbeddingTable table(j.at("d").get<int>());
  const auto &m = j.at("matrix");
  if (m.size() != table.data().size()) {
    throw ParseError("embedding matrix has the wrong number of entries");
  }
  for (std::size_t i = 0; i < m.size(); ++i) table.data()[i] = m[i].get<double>();
  if (cfg) *cfg = cfg_from(j.at("cfg"));
  return table;
}

template <typename Fn>
auto parsing(Fn &&fn) {
  try {
    return fn();
  } catch (const json::exception &e) {
    throw ParseError(std::string("invalid model file: ") + e.what());
  } catch (const ContractError &e) {
    throw ParseError(std::string("invalid model file: ") + e.what());
  } catch (const RangeError &e) {
    throw ParseError(std::string("invalid model file: ") + e.what());
  }
}

}  // namespace

std::vector<DirectionalSize> DeviceFingerprintModel::keys() const {
  std::vector<DirectionalSize> out;
  out.reserve(key_packets.size());
  for (const auto &k : key_packets) out.push_back(k.size);
  return out;
}

std::string model_to_string(const DeviceFingerprintModel &model) {
  json keys = json::array();
  for (const auto &k : model.key_packets) {
    keys.push_back({{"size", k.size.value()},
                    {"period_us", k.period_us},
                    {"cv", k.cv},
                    {"dst_ip", format_ipv4(k.dest.ip)},
                    {"dst_port", k.dest.port},
                    {"proto", proto_name(k.dest.proto)}});
  }
  std::vector<int> sizes;
  for (auto s : model.matrix.sizes()) sizes.push_back(s.value());
  json j = {
      {"format", "iotfp-model"},
      {"version", kModelFormatVersion},
      {"device_id", model.device_id},
      {"t_w_us", model.t_w_us},
      {"n_keys", model.n_keys},
      {"extraction",
       {{"t_b_us", model.extraction_cfg.t_b_us},
        {"eta", model.extraction_cfg.eta},
        {"min_bursts", model.extraction_cfg.min_bursts}}},
      {"embedding_cfg", cfg_json(model.embedding_cfg)},
      {"key_packets", std::move(keys)},
      {"matrix",
       {{"lambda", model.matrix.lambda()},
        {"min_freq", model.matrix.min_freq()},
        {"sizes", sizes},
        {"values", model.matrix.values()}}},
      {"tree", tree_json(model.tree)},
      {"quantized_tree", tree_json(model.quantized_tree)},
  };
  if (model.embedding) {
    j["embedding"] = embedding_json(*model.embedding, model.embedding_cfg);
  }
  return j.dump(1) + "\n";
}

DeviceFingerprintModel model_from_string(const std::string &text) {
  return parsing([&] {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "iotfp-model") {
      throw ParseError("not an iotfp model file");
    }
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw ParseError("unsupported model version");
    }
    DeviceFingerprintModel m;
    m.device_id = j.at("device_id").get<std::string>();
    m.t_w_us = j.at("t_w_us").get<std::int64_t>();
    m.n_keys = j.at("n_keys").get<std::size_t>();
    const auto &ex = j.at("extraction");
    m.extraction_cfg.t_b_us = ex.at("t_b_us").get<std::int64_t>();
    m.extraction_cfg.eta = ex.at("eta").get<double>();
    m.extraction_cfg.min_bursts = ex.at("min_bursts").get<std::size_t>();
    m.embedding_cfg = cfg_from(j.at("embedding_cfg"));
    for (const auto &k : j.at("key_packets")) {
      KeyPacket kp;
      kp.size = DirectionalSize(k.at("size").get<int>());
      kp.period_us = k.at("period_us").get<double>();
      kp.cv = k.at("cv").get<double>();
      kp.dest.ip = parse_ipv4(k.at("dst_ip").get<std::string>());
      kp.dest.port = k.at("dst_port").get<std::uint16_t>();
      const auto proto = k.at("proto").get<std::string>();
      kp.dest.proto = proto == "TCP"   ? L4Proto::kTcp
                      : proto == "UDP" ? L4Proto::kUdp
                                       : L4Proto::kOther;
      m.key_packets.push_back(kp);
    }
    const auto &jm = j.at("matrix");
    std::vector<DirectionalSize> sizes;
    for (const auto &s : jm.at("sizes")) sizes.emplace_back(s.get<int>());
    m.matrix = NeighborProbMatrix(std::move(sizes),
                                  jm.at("values").get<std::vector<double>>(),
                                  jm.at("lambda").get<double>(),
                                  jm.at("min_freq").get<std::size_t>());
    m.tree = tree_from(j.at("tree"));
    m.quantized_tree = tree_from(j.at("quantized_tree"));
    if (m.tree.dim() != m.dim() || m.quantized_tree.dim() != m.dim()) {
      throw ParseError("tree dimension does not match the key packet count");
    }
    if (j.contains("embedding")) m.embedding = embedding_from(j.at("embedding"), nullptr);
    return m;
  });
}

void save_model(const DeviceFingerprintModel &model,
                const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << model_to_string(model);
}

DeviceFingerprintModel load_model(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_string(ss.str());
}

std::string embedding_to_string(const EmbeddingTable &table,
                                const TrainingConfig &cfg) {
  return embedding_json(table, cfg).dump() + "\n";
}

EmbeddingTable embedding_from_string(const std::string &text,
                                     TrainingConfig *cfg) {
  return parsing([&] { return embedding_from(json::parse(text), cfg); });
}

}  // namespace iotfp
