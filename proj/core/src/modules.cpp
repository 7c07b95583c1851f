#include "hfgcn/modules.hpp"

#include <cmath>
#include <stdexcept>

namespace hfgcn {

namespace {

Tensor uniform_fan_in(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  return Tensor::uniform(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace

Conv1x1::Conv1x1(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight(name + ".weight", uniform_fan_in({out, in}, in, rng)), bias(name + ".bias", Tensor({out}), false) {}

TemporalConv::TemporalConv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                           ops::TemporalConvSpec spec_, std::mt19937_64& rng)
    : weight(name + ".weight", uniform_fan_in({out, in, kernel}, in * kernel, rng)),
      bias(name + ".bias", Tensor({out}), false),
      spec(spec_) {}

BatchNorm::BatchNorm(const std::string& name_, std::size_t channels)
    : name(name_),
      gamma(name_ + ".gamma", Tensor({channels}, 1.0), false),
      beta(name_ + ".beta", Tensor({channels}), false),
      state(channels) {}

// ---------------------------------------------------------------------------

HypergraphAttention::HypergraphAttention(const std::string& name, std::size_t in_channels, std::size_t embed,
                                         std::size_t branches, HamMode mode, std::mt19937_64& rng)
    : embed_(embed),
      mode_(mode),
      query_(name + ".query", in_channels, embed, rng),
      key_(name + ".key", in_channels, embed, rng) {
  if (branches == 0) throw std::invalid_argument("HypergraphAttention: need at least one hypergraph");
  group_keys_.reserve(branches);
  for (std::size_t s = 0; s < branches; ++s) {
    group_keys_.emplace_back(name + ".group_key" + std::to_string(s), in_channels, embed, rng);
  }
}

Var HypergraphAttention::forward(Tape& tape, const Var& x, const Var& hx) const {
  const std::size_t branches = group_keys_.size();
  if (hx.value().dim() != 5 || hx.shape()[0] != branches) {
    throw ShapeError("HAM: hX " + shape_string(hx.shape()) + " for " + std::to_string(branches) + " hypergraphs");
  }
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(embed_));
  const Var q = query_(tape, x);
  const Var k = key_(tape, x);
  auto attention = [&](const Var& keys) {
    Var logits = ops::contract(tape, "bcti,bctj->btij", q, keys);
    return ops::softmax_lastdim(tape, ops::scale(tape, logits, inv_scale));
  };

  std::vector<Var> maps;
  if (mode_ == HamMode::per_branch) {
    for (std::size_t s = 0; s < branches; ++s) {
      const Var hk = group_keys_[s](tape, ops::select(tape, hx, s));
      maps.push_back(attention(ops::add(tape, k, hk)));
    }
  } else {
    Var keys = k;
    for (std::size_t s = 0; s < branches; ++s) {
      keys = ops::add(tape, keys, group_keys_[s](tape, ops::select(tape, hx, s)));
    }
    const Var shared = attention(keys);
    maps.assign(branches, shared);
  }
  return ops::stack(tape, maps);
}

void HypergraphAttention::collect(std::vector<Parameter*>& out) {
  query_.collect(out);
  key_.collect(out);
  for (auto& g : group_keys_) g.collect(out);
}

// ---------------------------------------------------------------------------

HgcmBranch::HgcmBranch(const std::string& name, std::size_t in, std::size_t embed, std::size_t out,
                       std::mt19937_64& rng)
    : phi(name + ".phi", in, embed, rng),
      psi(name + ".psi", in, embed, rng),
      xi(name + ".xi", in, embed, rng),
      lift_right(name + ".lift_right", embed, out, rng),
      lift_left(name + ".lift_left", embed, out, rng),
      delta(name + ".delta", in, out, rng),
      gate(name + ".gate", Tensor({1}, 1.0 / 3.0)) {}

void HgcmBranch::collect(std::vector<Parameter*>& out) {
  phi.collect(out);
  psi.collect(out);
  xi.collect(out);
  lift_right.collect(out);
  lift_left.collect(out);
  delta.collect(out);
  out.push_back(&gate);
}

HypergraphConvolution::HypergraphConvolution(const std::string& name, std::size_t in_channels,
                                             std::size_t out_channels, std::size_t embed, std::size_t branches,
                                             XiInput xi_input, std::mt19937_64& rng)
    : xi_input_(xi_input), bn_(name + ".bn", out_channels) {
  branches_.reserve(branches);
  for (std::size_t s = 0; s < branches; ++s) {
    branches_.emplace_back(name + ".branch" + std::to_string(s), in_channels, embed, out_channels, rng);
  }
  if (in_channels != out_channels) {
    down_.emplace(name + ".down", in_channels, out_channels, rng);
    down_bn_.emplace(name + ".down_bn", out_channels);
  }
}

Var HypergraphConvolution::combine(Tape& tape, const Var& x, const Var& hx, const Var& ha,
                                   const Tensor& adjacency) const {
  const Var x_mean = ops::mean_axes(tape, x, {2});  // (B, C, V)
  const Var a = tape.constant(adjacency);
  Var y;
  for (std::size_t s = 0; s < branches_.size(); ++s) {
    const HgcmBranch& br = branches_[s];
    const Var phi = br.phi(tape, x_mean);
    const Var right = ops::tanh(tape, ops::pairwise_diff(tape, phi, br.psi(tape, x_mean)));
    const Var h_mean = xi_input_ == XiInput::hx ? ops::mean_axes(tape, ops::select(tape, hx, s), {2}) : x_mean;
    const Var left = ops::tanh(tape, ops::pairwise_diff(tape, phi, br.xi(tape, h_mean)));
    Var topology = ops::add(tape, br.lift_right(tape, right), br.lift_left(tape, left));
    topology = ops::add(tape, topology, a);  // (B, C_out, V, V)

    const Var values = br.delta(tape, x);  // (B, C_out, T, V)
    const Var channel_term = ops::contract(tape, "boij,botj->boti", topology, values);
    const Var attention_term =
        ops::scale_by(tape, ops::contract(tape, "btij,botj->boti", ops::select(tape, ha, s), values), br.gate.var());
    const Var ys = ops::add(tape, channel_term, attention_term);
    y = y.defined() ? ops::add(tape, y, ys) : ys;
  }
  return y;
}

Var HypergraphConvolution::forward(Tape& tape, const Var& x, const Var& hx, const Var& ha, const Tensor& adjacency,
                                   bool training) {
  const Var y = bn_(tape, combine(tape, x, hx, ha, adjacency), training);
  const Var res = down_ ? (*down_bn_)(tape, (*down_)(tape, x), training) : x;
  return ops::relu(tape, ops::add(tape, y, res));
}

void HypergraphConvolution::collect(std::vector<Parameter*>& out) {
  for (auto& b : branches_) b.collect(out);
  bn_.collect(out);
  if (down_) {
    down_->collect(out);
    down_bn_->collect(out);
  }
}

void HypergraphConvolution::collect_bn(std::vector<BnRef>& out) {
  bn_.collect_bn(out);
  if (down_bn_) down_bn_->collect_bn(out);
}

// ---------------------------------------------------------------------------

GraphConvolution::GraphConvolution(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                                   std::size_t subsets, std::mt19937_64& rng)
    : bn_(name + ".bn", out_channels) {
  delta_.reserve(subsets);
  for (std::size_t s = 0; s < subsets; ++s) {
    delta_.emplace_back(name + ".delta" + std::to_string(s), in_channels, out_channels, rng);
  }
  if (in_channels != out_channels) {
    down_.emplace(name + ".down", in_channels, out_channels, rng);
    down_bn_.emplace(name + ".down_bn", out_channels);
  }
}

Var GraphConvolution::forward(Tape& tape, const Var& x, const std::vector<Tensor>& subsets, bool training) {
  if (subsets.size() != delta_.size()) throw std::invalid_argument("GraphConvolution: subset count mismatch");
  Var y;
  for (std::size_t s = 0; s < delta_.size(); ++s) {
    const Var term = ops::contract(tape, "ij,botj->boti", tape.constant(subsets[s]), delta_[s](tape, x));
    y = y.defined() ? ops::add(tape, y, term) : term;
  }
  y = bn_(tape, y, training);
  const Var res = down_ ? (*down_bn_)(tape, (*down_)(tape, x), training) : x;
  return ops::relu(tape, ops::add(tape, y, res));
}

void GraphConvolution::collect(std::vector<Parameter*>& out) {
  for (auto& d : delta_) d.collect(out);
  bn_.collect(out);
  if (down_) {
    down_->collect(out);
    down_bn_->collect(out);
  }
}

void GraphConvolution::collect_bn(std::vector<BnRef>& out) {
  bn_.collect_bn(out);
  if (down_bn_) down_bn_->collect_bn(out);
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> mstc_branch_widths(std::size_t channels) {
  const std::size_t base = channels / 3;
  const std::size_t extra = channels % 3;
  if (base == 0) throw std::invalid_argument("MS-TC: need at least 3 channels");
  return {base + (extra > 0 ? 1 : 0), base + (extra > 1 ? 1 : 0), base};
}

MultiScaleTemporalConv::MultiScaleTemporalConv(const std::string& name, std::size_t channels, std::size_t stride,
                                               std::mt19937_64& rng)
    : stride_(stride) {
  const auto widths = mstc_branch_widths(channels);
  branches_.reserve(3);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string bname = name + ".branch" + std::to_string(i);
    Branch br{Conv1x1(bname + ".reduce", channels, widths[i], rng), BatchNorm(bname + ".reduce_bn", widths[i]),
              std::nullopt, BatchNorm(bname + ".out_bn", widths[i])};
    if (i < 2) {
      br.conv.emplace(bname + ".temporal", widths[i], widths[i], 5, ops::TemporalConvSpec{stride, i + 1}, rng);
    }
    branches_.push_back(std::move(br));
  }
}

Var MultiScaleTemporalConv::forward(Tape& tape, const Var& x, bool training) {
  std::vector<Var> outs;
  for (auto& br : branches_) {
    const Var r = ops::relu(tape, br.reduce_bn(tape, br.reduce(tape, x), training));
    const Var t = br.conv ? (*br.conv)(tape, r) : ops::max_pool_temporal(tape, r, 3, stride_);
    outs.push_back(br.out_bn(tape, t, training));
  }
  return ops::concat(tape, outs, 1);
}

void MultiScaleTemporalConv::collect(std::vector<Parameter*>& out) {
  for (auto& br : branches_) {
    br.reduce.collect(out);
    br.reduce_bn.collect(out);
    if (br.conv) br.conv->collect(out);
    br.out_bn.collect(out);
  }
}

void MultiScaleTemporalConv::collect_bn(std::vector<BnRef>& out) {
  for (auto& br : branches_) {
    br.reduce_bn.collect_bn(out);
    br.out_bn.collect_bn(out);
  }
}

}  // namespace hfgcn
