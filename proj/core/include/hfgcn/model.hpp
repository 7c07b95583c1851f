#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "hfgcn/model_config.hpp"
#include "hfgcn/modules.hpp"
#include "hfgcn/topology.hpp"

namespace hfgcn {

/// One network stage: spatial unit (HAM + HGCM, or the baseline graph
/// convolution), MS-TC, and a residual path around both.
class Block {
 public:
  Block(const std::string& name, const ModelConfig& cfg, const BlockSpec& spec, std::mt19937_64& rng);

  Var forward(Tape& tape, const Var& x, bool training, const HypergraphSet& hypergraphs, const Tensor& adjacency,
              const std::vector<Tensor>& baseline_subsets);

  HypergraphAttention* attention() { return ham_ ? &*ham_ : nullptr; }
  HypergraphConvolution* convolution() { return hgcm_ ? &*hgcm_ : nullptr; }
  GraphConvolution* graph_convolution() { return gcn_ ? &*gcn_ : nullptr; }
  MultiScaleTemporalConv& temporal() { return mstc_; }
  TemporalConv* residual() { return res_ ? &*res_ : nullptr; }
  BatchNorm* residual_bn() { return res_bn_ ? &*res_bn_ : nullptr; }
  const BlockSpec& spec() const { return spec_; }
  void collect(std::vector<Parameter*>& out);
  void collect_bn(std::vector<BnRef>& out);

 private:
  BlockSpec spec_;
  std::optional<HypergraphAttention> ham_;
  std::optional<HypergraphConvolution> hgcm_;
  std::optional<GraphConvolution> gcn_;
  MultiScaleTemporalConv mstc_;
  std::optional<TemporalConv> res_;
  std::optional<BatchNorm> res_bn_;
};

/// The full network. Input (B, 3, T, V, M) -> logits (B, K).
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  Var forward(Tape& tape, const Var& input, bool training);

  const ModelConfig& config() const { return cfg_; }
  const HypergraphSet& hypergraphs() const { return hypergraphs_; }
  const Tensor& adjacency() const { return adjacency_; }
  /// Replace topology (used for joint relabelling experiments).
  void set_topology(Tensor adjacency, HypergraphSet hypergraphs, std::vector<Tensor> baseline_subsets);
  const std::vector<Tensor>& baseline_subsets() const { return baseline_subsets_; }

  std::vector<Parameter*> parameters();
  std::vector<BnRef> batch_norms();
  std::size_t parameter_count();
  Block& block(std::size_t i) { return *blocks_.at(i); }
  std::size_t block_count() const { return blocks_.size(); }
  BatchNorm& data_bn() { return *data_bn_; }
  Parameter& classifier_weight() { return fc_weight_; }
  Parameter& classifier_bias() { return fc_bias_; }

  /// Running statistics of every BN set to (0, 1) and marked initialised.
  /// Called by the constructor.
  void reset_running_stats();

 private:
  ModelConfig cfg_;
  Tensor adjacency_;
  HypergraphSet hypergraphs_;
  std::vector<Tensor> baseline_subsets_;
  std::unique_ptr<BatchNorm> data_bn_;
  std::vector<std::unique_ptr<Block>> blocks_;
  Parameter fc_weight_;
  Parameter fc_bias_;
};

/// Two-subset distance partition of the normalised adjacency: its diagonal
/// (self loops) and its off-diagonal (neighbours) parts.
std::vector<Tensor> distance_partition(const Tensor& normalized_adjacency);

/// Hypergraphs named in cfg.hypergraphs for cfg.layout.
HypergraphSet build_hypergraph_set(const ModelConfig& cfg);

}  // namespace hfgcn
