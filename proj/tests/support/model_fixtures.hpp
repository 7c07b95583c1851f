#pragma once

// Model-level fixtures shared by the unit and acceptance tests: parameter
// randomisation and the composed eval-mode oracle of the whole network.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "hfgcn/model.hpp"
#include "oracles.hpp"

namespace fixtures {

using namespace hfgcn;

inline void randomize(Parameter& p, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  p.mutable_value() = oracle::random_tensor(p.value().shape(), rng, lo, hi);
}

inline void randomize(Conv1x1& c, std::mt19937_64& rng) {
  randomize(c.weight, rng);
  randomize(c.bias, rng);
}

// eval-mode BN with random affine and running statistics
inline void randomize(BatchNorm& bn, std::mt19937_64& rng) {
  randomize(bn.gamma, rng, 0.5, 1.5);
  randomize(bn.beta, rng);
  bn.state.running_mean = oracle::random_tensor(bn.state.running_mean.shape(), rng);
  bn.state.running_var = oracle::random_tensor(bn.state.running_var.shape(), rng, 0.5, 2.0);
  bn.state.initialized = true;
}

inline Tensor bn_eval(const Tensor& x, const BatchNorm& bn) {
  Tensor out(x.shape());
  const std::size_t C = x.extent(1), inner = x.size() / (x.extent(0) * C);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t c = (i / inner) % C;
    out[i] = bn.gamma.value()[c] * (x[i] - bn.state.running_mean[c]) / std::sqrt(bn.state.running_var[c] + 1e-5) +
             bn.beta.value()[c];
  }
  return out;
}

inline oracle::HgcmBranchWeights weights_of(const HgcmBranch& b) {
  return {b.phi.weight.value(),        b.phi.bias.value(),       b.psi.weight.value(), b.psi.bias.value(),
          b.xi.weight.value(),         b.xi.bias.value(),        b.lift_right.weight.value(),
          b.lift_right.bias.value(),   b.lift_left.weight.value(), b.lift_left.bias.value(),
          b.delta.weight.value(),      b.delta.bias.value(),     b.gate.value()[0]};
}

inline HypergraphSet ntu_set(const std::vector<std::string>& names = {"h1", "h2", "h3"}) {
  std::vector<HypergraphIncidence> m;
  for (const auto& n : names) m.push_back(build_partition_hypergraph(ntu25_partition(n), 25, n));
  return HypergraphSet(m);
}

// three-joint toy hypergraphs for the tiny oracle cases
inline HypergraphSet toy_set() {
  return HypergraphSet({build_partition_hypergraph({{0, 1}, {2}}, 3, "a"),
                        build_partition_hypergraph({{0}, {1, 2}}, 3, "b"),
                        build_partition_hypergraph({{0, 2}, {1}}, 3, "c")});
}

inline Tensor mstc_oracle(const Tensor& x, MultiScaleTemporalConv& m, bool training) {
  std::vector<Tensor> outs;
  for (std::size_t i = 0; i < 3; ++i) {
    auto& br = m.branch(i);
    auto norm = [&](const Tensor& t, BatchNorm& bn) {
      return training ? oracle::batch_norm(t, bn.gamma.value(), bn.beta.value()) : bn_eval(t, bn);
    };
    const Tensor r = oracle::relu(norm(oracle::conv1x1(x, br.reduce.weight.value(), &br.reduce.bias.value()), br.reduce_bn));
    const Tensor t = br.conv ? oracle::temporal_conv(r, br.conv->weight.value(), &br.conv->bias.value(), m.stride(),
                                                     br.conv->spec.dilation)
                             : oracle::max_pool(r, 3, m.stride());
    outs.push_back(norm(t, br.out_bn));
  }
  return oracle::concat_channels(outs);
}

// Whole network in eval mode from the per-module oracles.
inline Tensor model_oracle(Model& model, const Tensor& input) {
  const ModelConfig& cfg = model.config();
  const std::size_t B = input.extent(0), T = input.extent(2), V = input.extent(3), M = input.extent(4);
  Tensor x({B * M, 3, T, V});
  const BatchNorm& dbn = model.data_bn();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t v = 0; v < V; ++v) {
            const std::size_t ch = (m * V + v) * 3 + c;
            x.at({b * M + m, c, t, v}) = dbn.gamma.value()[ch] * (input.at({b, c, t, v, m}) - dbn.state.running_mean[ch]) /
                                             std::sqrt(dbn.state.running_var[ch] + 1e-5) +
                                         dbn.beta.value()[ch];
          }

  for (std::size_t i = 0; i < model.block_count(); ++i) {
    Block& blk = model.block(i);
    HypergraphAttention& ham = *blk.attention();
    HypergraphConvolution& hgcm = *blk.convolution();
    const Tensor q = oracle::conv1x1(x, ham.query().weight.value(), &ham.query().bias.value());
    const Tensor k = oracle::conv1x1(x, ham.key().weight.value(), &ham.key().bias.value());
    Tensor y;
    for (std::size_t s = 0; s < model.hypergraphs().size(); ++s) {
      const Tensor hx = oracle::apply_joint_matrix(model.hypergraphs().propagation(s), x);
      const Tensor hk = oracle::conv1x1(hx, ham.group_key(s).weight.value(), &ham.group_key(s).bias.value());
      const Tensor ys = oracle::hgcm_branch(x, hx, oracle::attention_map(q, k, hk), model.adjacency(),
                                            weights_of(hgcm.branch(s)));
      y = y.empty() ? ys : oracle::add(y, ys);
    }
    Tensor res = x;
    if (hgcm.down()) res = bn_eval(oracle::conv1x1(x, hgcm.down()->weight.value(), &hgcm.down()->bias.value()), *hgcm.down_bn());
    const Tensor spatial = oracle::relu(oracle::add(bn_eval(y, hgcm.bn()), res));
    const Tensor temporal = mstc_oracle(spatial, blk.temporal(), false);
    Tensor skip = x;
    if (blk.residual()) {
      skip = bn_eval(oracle::temporal_conv(x, blk.residual()->weight.value(), &blk.residual()->bias.value(),
                                           blk.spec().stride, 1),
                     *blk.residual_bn());
    }
    x = oracle::relu(oracle::add(temporal, skip));
  }

  const std::size_t C = cfg.final_channels(), K = cfg.num_classes;
  const Tensor pooled = oracle::mean_axes(x, {2, 3});  // (B*M, C)
  Tensor logits({B, K});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k) {
      double s = model.classifier_bias().value()[k];
      for (std::size_t c = 0; c < C; ++c) {
        double p = 0.0;
        for (std::size_t m = 0; m < M; ++m) p += pooled.at({b * M + m, c});
        s += model.classifier_weight().value().at({k, c}) * p / double(M);
      }
      logits.at({b, k}) = s;
    }
  return logits;
}

inline ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.frames = 6;
  cfg.persons = 2;
  cfg.num_classes = 5;
  cfg.reduction = 3;
  cfg.blocks = {{3, 6, 1}, {6, 9, 2}};
  return cfg;
}

inline void randomize_model(Model& model, std::mt19937_64& rng) {
  for (Parameter* p : model.parameters()) randomize(*p, rng, -0.5, 0.5);
  for (auto& [name, st] : model.batch_norms()) {
    st->running_mean = oracle::random_tensor(st->running_mean.shape(), rng, -0.2, 0.2);
    st->running_var = oracle::random_tensor(st->running_var.shape(), rng, 0.5, 2.0);
  }
}

inline Tensor run(Model& model, const Tensor& input, bool training = false) {
  Tape tape(Tape::Mode::inference);
  return model.forward(tape, tape.constant(input), training).value();
}

}  // namespace fixtures
