#pragma once

#include <cstdint>

#include "hfgcn/model_config.hpp"
#include "hfgcn/tensor.hpp"

namespace hfgcn {

/// Exact trainable-parameter tally of the network described by cfg.
std::uint64_t count_params(const ModelConfig& cfg);

struct FlopCount {
  std::uint64_t multiply_adds = 0;
  std::uint64_t flops = 0;  // 2 x multiply_adds
};

/// Multiply-adds of every convolution, hypergraph propagation and contraction
/// for one sample of shape (3, T, V, M). Normalisation, activations, softmax
/// and pooling are not counted.
FlopCount count_flops(const ModelConfig& cfg, const Shape& sample_shape);

}  // namespace hfgcn
