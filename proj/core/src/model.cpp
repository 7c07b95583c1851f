#include "hfgcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hfgcn {

// ---------------------------------------------------------------------------

std::vector<Tensor> distance_partition(const Tensor& a) {
  const std::size_t v = a.extent(0);
  Tensor self({v, v});
  Tensor neighbours = a;
  for (std::size_t i = 0; i < v; ++i) {
    self.at({i, i}) = a.at({i, i});
    neighbours.at({i, i}) = 0.0;
  }
  return {std::move(self), std::move(neighbours)};
}

HypergraphSet build_hypergraph_set(const ModelConfig& cfg) {
  const LayoutInfo& info = layout_info(cfg.layout);
  std::vector<HypergraphIncidence> members;
  for (const auto& name : cfg.hypergraphs) members.push_back(layout_hypergraph(info, name, cfg.hypergraph_dir));
  return HypergraphSet(std::move(members));
}

Block::Block(const std::string& name, const ModelConfig& cfg, const BlockSpec& spec, std::mt19937_64& rng)
    : spec_(spec), mstc_(name + ".mstc", spec.out_channels, spec.stride, rng) {
  if (cfg.variant == ModelVariant::hfgcn) {
    const std::size_t embed = cfg.embed_width(spec.in_channels);
    ham_.emplace(name + ".ham", spec.in_channels, embed, cfg.hypergraphs.size(), cfg.ham_mode, rng);
    hgcm_.emplace(name + ".hgcm", spec.in_channels, spec.out_channels, embed, cfg.hypergraphs.size(), cfg.xi_input,
                  rng);
  } else {
    gcn_.emplace(name + ".gcn", spec.in_channels, spec.out_channels, 2, rng);
  }
  if (spec.in_channels != spec.out_channels || spec.stride != 1) {
    res_.emplace(name + ".residual", spec.in_channels, spec.out_channels, 1, ops::TemporalConvSpec{spec.stride, 1}, rng);
    res_bn_.emplace(name + ".residual_bn", spec.out_channels);
  }
}

Var Block::forward(Tape& tape, const Var& x, bool training, const HypergraphSet& hypergraphs, const Tensor& adjacency,
                   const std::vector<Tensor>& baseline_subsets) {
  Var spatial;
  if (hgcm_) {
    const Var hx = apply_hypergraphs(tape, x, hypergraphs);
    const Var ha = ham_->forward(tape, x, hx);
    spatial = hgcm_->forward(tape, x, hx, ha, adjacency, training);
  } else {
    spatial = gcn_->forward(tape, x, baseline_subsets, training);
  }
  const Var temporal = mstc_.forward(tape, spatial, training);
  const Var res = res_ ? (*res_bn_)(tape, (*res_)(tape, x), training) : x;
  return ops::relu(tape, ops::add(tape, temporal, res));
}

void Block::collect(std::vector<Parameter*>& out) {
  if (ham_) ham_->collect(out);
  if (hgcm_) hgcm_->collect(out);
  if (gcn_) gcn_->collect(out);
  mstc_.collect(out);
  if (res_) {
    res_->collect(out);
    res_bn_->collect(out);
  }
}

void Block::collect_bn(std::vector<BnRef>& out) {
  if (hgcm_) hgcm_->collect_bn(out);
  if (gcn_) gcn_->collect_bn(out);
  mstc_.collect_bn(out);
  if (res_bn_) res_bn_->collect_bn(out);
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      fc_weight_("fc.weight", Tensor()),
      fc_bias_("fc.bias", Tensor(), false) {
  cfg_.validate();
  const LayoutInfo& info = layout_info(cfg_.layout);
  adjacency_ = build_adjacency(info.bones, info.joints).a;
  baseline_subsets_ = distance_partition(adjacency_);
  if (cfg_.variant == ModelVariant::hfgcn) hypergraphs_ = build_hypergraph_set(cfg_);

  std::mt19937_64 rng(seed);
  data_bn_ = std::make_unique<BatchNorm>("data_bn", cfg_.persons * cfg_.joints * 3);
  for (std::size_t i = 0; i < cfg_.blocks.size(); ++i) {
    blocks_.push_back(std::make_unique<Block>("block" + std::to_string(i), cfg_, cfg_.blocks[i], rng));
  }
  const std::size_t c = cfg_.final_channels();
  fc_weight_ = Parameter("fc.weight", Tensor::uniform({cfg_.num_classes, c}, 1.0 / std::sqrt(double(c)), rng));
  fc_bias_ = Parameter("fc.bias", Tensor({cfg_.num_classes}), false);
  reset_running_stats();
}

void Model::set_topology(Tensor adjacency, HypergraphSet hypergraphs, std::vector<Tensor> baseline_subsets) {
  adjacency_ = std::move(adjacency);
  hypergraphs_ = std::move(hypergraphs);
  baseline_subsets_ = std::move(baseline_subsets);
}

Var Model::forward(Tape& tape, const Var& input, bool training) {
  const Shape& s = input.shape();
  if (s.size() != 5 || s[1] != 3 || s[3] != cfg_.joints || s[4] != cfg_.persons) {
    throw ShapeError("model: input " + shape_string(s) + " does not match (B,3,T," + std::to_string(cfg_.joints) +
                     "," + std::to_string(cfg_.persons) + ")");
  }
  const std::size_t batch = s[0], frames = s[2], joints = s[3], persons = s[4];
  // (B,C,T,V,M) -> (B, M*V*C, T) for the input normalisation
  Var x = ops::permute(tape, input, {0, 4, 3, 1, 2});
  x = ops::reshape(tape, x, {batch, persons * joints * 3, frames});
  x = (*data_bn_)(tape, x, training);
  x = ops::reshape(tape, x, {batch, persons, joints, 3, frames});
  x = ops::permute(tape, x, {0, 1, 3, 4, 2});
  x = ops::reshape(tape, x, {batch * persons, 3, frames, joints});

  for (auto& block : blocks_) x = block->forward(tape, x, training, hypergraphs_, adjacency_, baseline_subsets_);

  Var pooled = ops::mean_axes(tape, x, {2, 3});  // (B*M, C)
  pooled = ops::reshape(tape, pooled, {batch, persons, cfg_.final_channels()});
  pooled = ops::mean_axes(tape, pooled, {1});  // (B, C)
  const Var logits = ops::contract(tape, "nc,kc->nk", pooled, fc_weight_.var());
  return ops::add(tape, logits, fc_bias_.var());
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  data_bn_->collect(out);
  for (auto& b : blocks_) b->collect(out);
  out.push_back(&fc_weight_);
  out.push_back(&fc_bias_);
  return out;
}

std::vector<BnRef> Model::batch_norms() {
  std::vector<BnRef> out;
  data_bn_->collect_bn(out);
  for (auto& b : blocks_) b->collect_bn(out);
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->value().size();
  return n;
}

void Model::reset_running_stats() {
  for (auto& [name, state] : batch_norms()) state->reset();
}

}  // namespace hfgcn
