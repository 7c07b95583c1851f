#include "hfgcn/budget.hpp"

#include "hfgcn/modules.hpp"

namespace hfgcn {

namespace {

using u64 = std::uint64_t;

u64 conv_params(u64 in, u64 out, u64 kernel = 1) { return in * out * kernel + out; }
u64 bn_params(u64 c) { return 2 * c; }

u64 mstc_params(u64 c) {
  u64 n = 0;
  const auto widths = mstc_branch_widths(c);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const u64 w = widths[i];
    n += conv_params(c, w) + 2 * bn_params(w);
    if (i < 2) n += conv_params(w, w, 5);
  }
  return n;
}

}  // namespace

std::uint64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  u64 n = bn_params(cfg.persons * cfg.joints * 3);
  const u64 s = cfg.variant == ModelVariant::hfgcn ? cfg.hypergraphs.size() : 0;
  for (const auto& b : cfg.blocks) {
    const u64 in = b.in_channels, out = b.out_channels;
    if (cfg.variant == ModelVariant::hfgcn) {
      const u64 e = cfg.embed_width(b.in_channels);
      n += (2 + s) * conv_params(in, e);  // q, k, hk_s
      n += s * (3 * conv_params(in, e) + 2 * conv_params(e, out) + conv_params(in, out) + 1);
    } else {
      n += 2 * conv_params(in, out);
    }
    n += bn_params(out);
    if (in != out) n += conv_params(in, out) + bn_params(out);
    n += mstc_params(out);
    if (in != out || b.stride != 1) n += conv_params(in, out) + bn_params(out);
  }
  n += conv_params(cfg.final_channels(), cfg.num_classes);
  return n;
}

FlopCount count_flops(const ModelConfig& cfg, const Shape& sample_shape) {
  cfg.validate();
  if (sample_shape.size() != 4 || sample_shape[0] != 3) {
    throw ShapeError("count_flops: sample shape must be (3,T,V,M), got " + shape_string(sample_shape));
  }
  const u64 v = sample_shape[2];
  const u64 n = sample_shape[3];  // persons share weights; each runs the stack
  u64 t = sample_shape[1];
  const u64 s = cfg.variant == ModelVariant::hfgcn ? cfg.hypergraphs.size() : 0;
  u64 macs = 0;
  for (const auto& b : cfg.blocks) {
    const u64 in = b.in_channels, out = b.out_channels;
    const u64 t_out = (t + b.stride - 1) / b.stride;
    const u64 pos = n * t * v;  // positions of the block input
    if (cfg.variant == ModelVariant::hfgcn) {
      const u64 e = cfg.embed_width(b.in_channels);
      macs += s * n * in * t * v * v;       // hX
      macs += (2 + s) * pos * in * e;       // q, k, hk_s
      const u64 maps = cfg.ham_mode == HamMode::per_branch ? s : 1;
      macs += maps * n * t * v * v * e;     // attention logits
      macs += s * 3 * n * v * in * e;       // phi, psi, xi on temporal means
      macs += s * 2 * n * v * v * e * out;  // channel lifts
      macs += s * pos * in * out;           // delta_s
      macs += s * 2 * n * out * t * v * v;  // topology and HA contractions
    } else {
      macs += 2 * pos * in * out;
      macs += 2 * n * out * t * v * v;
    }
    if (in != out) macs += pos * in * out;
    const auto widths = mstc_branch_widths(out);
    for (std::size_t i = 0; i < widths.size(); ++i) {
      macs += pos * out * widths[i];
      if (i < 2) macs += n * t_out * v * widths[i] * widths[i] * 5;
    }
    if (in != out || b.stride != 1) macs += n * t_out * v * in * out;
    t = t_out;
  }
  macs += cfg.final_channels() * cfg.num_classes;
  return {macs, 2 * macs};
}

}  // namespace hfgcn
