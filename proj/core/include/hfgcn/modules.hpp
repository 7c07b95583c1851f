#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hfgcn/model_config.hpp"
#include "hfgcn/ops.hpp"
#include "hfgcn/topology.hpp"

namespace hfgcn {

using BnRef = std::pair<std::string, ops::BatchNormState*>;

/// 1x1 channel mix with bias.
struct Conv1x1 {
  Parameter weight;
  Parameter bias;

  Conv1x1(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);
  Var operator()(Tape& tape, const Var& x) const { return ops::conv1x1(tape, x, weight.var(), bias.var()); }
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct TemporalConv {
  Parameter weight;  // (O, C, K)
  Parameter bias;
  ops::TemporalConvSpec spec;

  TemporalConv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
               ops::TemporalConvSpec spec, std::mt19937_64& rng);
  Var operator()(Tape& tape, const Var& x) const { return ops::temporal_conv(tape, x, weight.var(), bias.var(), spec); }
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct BatchNorm {
  std::string name;
  Parameter gamma;
  Parameter beta;
  ops::BatchNormState state;

  BatchNorm(const std::string& name, std::size_t channels);
  Var operator()(Tape& tape, const Var& x, bool training) {
    return ops::batch_norm(tape, x, gamma.var(), beta.var(), state, training);
  }
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
  void collect_bn(std::vector<BnRef>& out) { out.emplace_back(name, &state); }
};

/// Hypergraph attention: per-frame joint-to-joint maps mixing pairwise (q.k)
/// and point-group (q.hk_s) correlations.
class HypergraphAttention {
 public:
  HypergraphAttention(const std::string& name, std::size_t in_channels, std::size_t embed, std::size_t branches,
                      HamMode mode, std::mt19937_64& rng);

  /// x (B,C,T,V), hx (S,B,C,T,V) -> HA (S,B,T,V,V), rows softmax-normalised.
  Var forward(Tape& tape, const Var& x, const Var& hx) const;

  std::size_t embed_width() const { return embed_; }
  HamMode mode() const { return mode_; }
  Conv1x1& query() { return query_; }
  Conv1x1& key() { return key_; }
  Conv1x1& group_key(std::size_t s) { return group_keys_.at(s); }
  void collect(std::vector<Parameter*>& out);

 private:
  std::size_t embed_;
  HamMode mode_;
  Conv1x1 query_;
  Conv1x1 key_;
  std::vector<Conv1x1> group_keys_;
};

/// One hypergraph branch of the HGCM.
struct HgcmBranch {
  Conv1x1 phi, psi, xi;          // C_in -> C_e
  Conv1x1 lift_right, lift_left;  // C_e -> C_out
  Conv1x1 delta;                  // C_in -> C_out
  Parameter gate;                 // HA branch weight, starts at 1/3

  HgcmBranch(const std::string& name, std::size_t in, std::size_t embed, std::size_t out, std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
};

/// Hypergraph convolution: channel-wise refined topologies. For every branch s
///   Y_s = delta_s(x) . (lift_r tanh(phi(xbar) - psi(xbar)) + A + lift_l tanh(phi(xbar) - xi(hbar_s)))
///       + gate_s * delta_s(x) . HA_s
/// where xbar and hbar_s are temporal means, and Y = sum_s Y_s.
class HypergraphConvolution {
 public:
  HypergraphConvolution(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                        std::size_t embed, std::size_t branches, XiInput xi_input, std::mt19937_64& rng);

  /// The summed three-term output Y, shape (B, C_out, T, V).
  Var combine(Tape& tape, const Var& x, const Var& hx, const Var& ha, const Tensor& adjacency) const;
  /// relu(BN(Y) + residual(x)).
  Var forward(Tape& tape, const Var& x, const Var& hx, const Var& ha, const Tensor& adjacency, bool training);

  HgcmBranch& branch(std::size_t s) { return branches_.at(s); }
  std::size_t branches() const { return branches_.size(); }
  XiInput xi_input() const { return xi_input_; }
  BatchNorm& bn() { return bn_; }
  Conv1x1* down() { return down_ ? &*down_ : nullptr; }
  BatchNorm* down_bn() { return down_bn_ ? &*down_bn_ : nullptr; }
  void collect(std::vector<Parameter*>& out);
  void collect_bn(std::vector<BnRef>& out);

 private:
  XiInput xi_input_;
  std::vector<HgcmBranch> branches_;
  BatchNorm bn_;
  std::optional<Conv1x1> down_;
  std::optional<BatchNorm> down_bn_;
};

/// Baseline spatial graph convolution: sum_s A_s delta_s(x), then BN,
/// residual and ReLU.
class GraphConvolution {
 public:
  GraphConvolution(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                   std::size_t subsets, std::mt19937_64& rng);

  Var forward(Tape& tape, const Var& x, const std::vector<Tensor>& subsets, bool training);
  Conv1x1& delta(std::size_t s) { return delta_.at(s); }
  BatchNorm& bn() { return bn_; }
  Conv1x1* down() { return down_ ? &*down_ : nullptr; }
  BatchNorm* down_bn() { return down_bn_ ? &*down_bn_ : nullptr; }
  void collect(std::vector<Parameter*>& out);
  void collect_bn(std::vector<BnRef>& out);

 private:
  std::vector<Conv1x1> delta_;
  BatchNorm bn_;
  std::optional<Conv1x1> down_;
  std::optional<BatchNorm> down_bn_;
};

/// Branch widths of the multi-scale temporal module; they sum to `channels`.
std::vector<std::size_t> mstc_branch_widths(std::size_t channels);

/// Multi-scale temporal convolution: three branches (1x1 reduce followed by
/// K=5 d=1, K=5 d=2, or max-pool K=3), concatenated on channels.
class MultiScaleTemporalConv {
 public:
  MultiScaleTemporalConv(const std::string& name, std::size_t channels, std::size_t stride, std::mt19937_64& rng);

  Var forward(Tape& tape, const Var& x, bool training);
  std::size_t stride() const { return stride_; }
  void collect(std::vector<Parameter*>& out);
  void collect_bn(std::vector<BnRef>& out);

  struct Branch {
    Conv1x1 reduce;
    BatchNorm reduce_bn;
    std::optional<TemporalConv> conv;  // absent on the pooling branch
    BatchNorm out_bn;
  };
  Branch& branch(std::size_t i) { return branches_.at(i); }

 private:
  std::size_t stride_;
  std::vector<Branch> branches_;
};

}  // namespace hfgcn
