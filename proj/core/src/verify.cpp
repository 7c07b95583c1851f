#include "hfgcn/verify.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

#include "hfgcn/model.hpp"
#include "hfgcn/ops.hpp"

namespace hfgcn {

namespace {

// Fixed random weights so the loss depends on every output element
// differently (a plain sum would hide softmax and BN gradients).
Var weighted_sum(Tape& tape, const Var& y, const Tensor& w) {
  const std::size_t n = y.value().size();
  const Var flat = ops::reshape(tape, y, {n});
  return ops::sum_all(tape, ops::contract(tape, "i,i->i", flat, tape.constant(w)));
}

class ScopedCorruption {
 public:
  explicit ScopedCorruption(bool on) : previous_(ops::adjoint_corruption()) { ops::set_adjoint_corruption(on); }
  ~ScopedCorruption() { ops::set_adjoint_corruption(previous_); }
  ScopedCorruption(const ScopedCorruption&) = delete;
  ScopedCorruption& operator=(const ScopedCorruption&) = delete;

 private:
  bool previous_;
};

}  // namespace

ModelConfig gradcheck_model_config(const GradcheckSettings& s) {
  ModelConfig cfg;
  cfg.frames = s.frames;
  cfg.persons = 1;
  cfg.num_classes = s.num_classes;
  cfg.blocks = {{3, s.channels, 1}, {s.channels, s.channels, 2}};
  return cfg;
}

std::vector<ModuleGradcheck> module_gradchecks(const GradcheckSettings& s) {
  const std::vector<std::string>& wanted = s.modules.empty() ? kGradcheckModules : s.modules;
  for (const auto& m : wanted) {
    if (std::find(kGradcheckModules.begin(), kGradcheckModules.end(), m) == kGradcheckModules.end()) {
      throw std::invalid_argument("gradcheck: unknown module '" + m + "'");
    }
  }
  const ScopedCorruption corruption(s.corrupt);
  const GradCheckOptions opts{1e-5, s.samples_per_parameter, s.seed};
  std::mt19937_64 rng(s.seed);

  ModelConfig cfg = gradcheck_model_config(s);
  cfg.validate();
  const HypergraphSet hs = build_hypergraph_set(cfg);
  const Tensor adjacency = build_adjacency(layout_info(cfg.layout).bones, cfg.joints).a;
  const std::size_t B = s.batch, C = s.channels, T = s.frames, V = cfg.joints;
  const std::size_t embed = std::max<std::size_t>(2, C / 2);

  std::vector<ModuleGradcheck> out;
  for (const auto& name : wanted) {
    Parameter x("input", Tensor::uniform({B, C, T, V}, 1.0, rng));
    GradCheckResult r;
    if (name == "ham") {
      HypergraphAttention ham("ham", C, embed, hs.size(), HamMode::per_branch, rng);
      const Tensor w = Tensor::uniform({hs.size() * B * T * V * V}, 1.0, rng);
      std::vector<Parameter*> params{&x};
      ham.collect(params);
      r = finite_diff_check(
          [&](Tape& tape) {
            const Var hx = apply_hypergraphs(tape, x.var(), hs);
            return weighted_sum(tape, ham.forward(tape, x.var(), hx), w);
          },
          params, opts);
    } else if (name == "hgcm") {
      HypergraphAttention ham("ham", C, embed, hs.size(), HamMode::per_branch, rng);
      HypergraphConvolution hgcm("hgcm", C, 2 * C, embed, hs.size(), XiInput::hx, rng);
      for (std::size_t b = 0; b < hs.size(); ++b) hgcm.branch(b).gate.mutable_value()[0] = 0.5 + 0.25 * double(b);
      const Tensor w = Tensor::uniform({B * 2 * C * T * V}, 1.0, rng);
      std::vector<Parameter*> params{&x};
      hgcm.collect(params);
      r = finite_diff_check(
          [&](Tape& tape) {
            const Var hx = apply_hypergraphs(tape, x.var(), hs);
            const Var ha = ham.forward(tape, x.var(), hx);
            return weighted_sum(tape, hgcm.forward(tape, x.var(), hx, ha, adjacency, true), w);
          },
          params, opts);
    } else if (name == "mstc") {
      MultiScaleTemporalConv mstc("mstc", C, 2, rng);
      const Tensor w = Tensor::uniform({B * C * ((T + 1) / 2) * V}, 1.0, rng);
      std::vector<Parameter*> params{&x};
      mstc.collect(params);
      r = finite_diff_check([&](Tape& tape) { return weighted_sum(tape, mstc.forward(tape, x.var(), true), w); },
                            params, opts);
    } else {
      Model model(cfg, s.seed);
      Parameter input("input", Tensor::uniform({B, 3, T, V, cfg.persons}, 1.0, rng));
      const Tensor w = Tensor::uniform({B * cfg.num_classes}, 1.0, rng);
      std::vector<Parameter*> params{&input};
      for (Parameter* p : model.parameters()) params.push_back(p);
      r = finite_diff_check(
          [&](Tape& tape) { return weighted_sum(tape, model.forward(tape, input.var(), true), w); }, params, opts);
    }
    out.push_back({name, r, r.max_rel_error < s.tolerance});
  }
  return out;
}

}  // namespace hfgcn
