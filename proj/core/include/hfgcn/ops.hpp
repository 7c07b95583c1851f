#pragma once

#include <string_view>
#include <vector>

#include "hfgcn/tape.hpp"
#include "hfgcn/tensor.hpp"

// Differentiable tensor ops. Every op computes its value eagerly and, when the
// tape is recording and an input requires a gradient, records its adjoint.
// Feature maps follow the (B, C, T, V) layout.
namespace hfgcn::ops {

/// a + b. b may have a's shape or a suffix of it (broadcast over leading axes).
Var add(Tape& tape, const Var& a, const Var& b);
Var sub(Tape& tape, const Var& a, const Var& b);
Var scale(Tape& tape, const Var& a, double s);
/// s * a with s a learned one-element tensor.
Var scale_by(Tape& tape, const Var& a, const Var& s);

Var relu(Tape& tape, const Var& x);
Var tanh(Tape& tape, const Var& x);
Var softmax_lastdim(Tape& tape, const Var& x);

/// out[b,o,t,v] = sum_c w[o,c] x[b,c,t,v] (+ bias[o]). Accepts any rank >= 2
/// input whose axis 1 is the channel axis.
Var conv1x1(Tape& tape, const Var& x, const Var& w, const Var& bias = {});

struct TemporalConvSpec {
  std::size_t stride = 1;
  std::size_t dilation = 1;
};

/// 1-D convolution along T with zero same-padding d(K-1)/2; w is (O, C, K),
/// K odd. Output has ceil(T / stride) frames.
Var temporal_conv(Tape& tape, const Var& x, const Var& w, const Var& bias, TemporalConvSpec spec);

/// Max over a window along T with -inf padding (K-1)/2.
Var max_pool_temporal(Tape& tape, const Var& x, std::size_t kernel, std::size_t stride);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  bool initialized = false;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t channels = 0);
  void reset();  // mean 0, var 1, initialized
};

/// Per-channel normalisation over every axis except axis 1. Training mode uses
/// batch statistics and updates the running ones; eval mode requires
/// initialised running statistics.
Var batch_norm(Tape& tape, const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
               bool training);

/// Einstein-summation contraction of two operands, e.g. "bcti,bctj->btij".
/// Labels are single letters, unique within an operand; every operand label
/// must appear in the other operand or in the output.
Var contract(Tape& tape, std::string_view spec, const Var& a, const Var& b);

/// out[n,c,i,j] = a[n,c,i] - b[n,c,j] for a, b of shape (N, C, V).
Var pairwise_diff(Tape& tape, const Var& a, const Var& b);

Var mean_axes(Tape& tape, const Var& x, std::vector<std::size_t> axes);
Var sum_all(Tape& tape, const Var& x);
Var permute(Tape& tape, const Var& x, std::vector<std::size_t> perm);
Var reshape(Tape& tape, const Var& x, Shape shape);
Var concat(Tape& tape, const std::vector<Var>& parts, std::size_t axis);
/// x[index] along axis 0.
Var select(Tape& tape, const Var& x, std::size_t index);
Var stack(Tape& tape, const std::vector<Var>& parts);

// Value-level kernels shared by the ops and by non-differentiable callers.
Tensor permute_values(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor contract_values(std::string_view spec, const Tensor& a, const Tensor& b);

/// Negative-control switch for gradient checking: when enabled the conv1x1
/// weight adjoint is scaled by 1.5. Thread-local.
void set_adjoint_corruption(bool enabled);
bool adjoint_corruption();

}  // namespace hfgcn::ops
