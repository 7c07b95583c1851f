#include "hfgcn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hfgcn::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;
using MapVec = Eigen::Map<Eigen::VectorXd>;

thread_local bool g_corrupt = false;

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// Visits every multi-index of `shape` in row-major order and calls
// f(offset_a, offset_b) with offsets computed from two stride sets.
template <typename F>
void walk2(const Shape& shape, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t rank = shape.size();
  if (rank == 0) {
    f(std::size_t{0}, std::size_t{0});
    return;
  }
  if (shape_numel(shape) == 0) return;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0;
  std::size_t ob = 0;
  const std::size_t inner = shape[rank - 1];
  const std::size_t ia = sa[rank - 1];
  const std::size_t ib = sb[rank - 1];
  while (true) {
    for (std::size_t i = 0; i < inner; ++i) f(oa + i * ia, ob + i * ib);
    // advance the odometer on axes [0, rank-1)
    std::size_t axis = rank - 1;
    while (axis > 0) {
      --axis;
      ++idx[axis];
      oa += sa[axis];
      ob += sb[axis];
      if (idx[axis] < shape[axis]) break;
      oa -= sa[axis] * shape[axis];
      ob -= sb[axis] * shape[axis];
      idx[axis] = 0;
      if (axis == 0) return;
    }
    if (rank == 1) return;
  }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

bool is_suffix(const Shape& full, const Shape& suffix) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

}  // namespace

void set_adjoint_corruption(bool enabled) { g_corrupt = enabled; }
bool adjoint_corruption() { return g_corrupt; }

// ---------------------------------------------------------------------------
// Elementwise

Var add(Tape& tape, const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!is_suffix(av.shape(), bv.shape())) {
    throw ShapeError("add: " + shape_string(bv.shape()) + " does not broadcast to " + shape_string(av.shape()));
  }
  Tensor out = av;
  const std::size_t inner = bv.size();
  const std::size_t outer = inner ? av.size() / inner : 0;
  for (std::size_t o = 0; o < outer; ++o) {
    double* dst = out.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) dst[i] += bv[i];
  }
  Var res = tape.result(std::move(out), {&a, &b});
  if (res.requires_grad()) {
    tape.record([a, b, res, outer, inner] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      if (a.requires_grad()) a.node()->grad_buffer() += g;
      if (b.requires_grad()) {
        Tensor& gb = b.node()->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < inner; ++i) gb[i] += g[o * inner + i];
      }
    });
  }
  return res;
}

Var sub(Tape& tape, const Var& a, const Var& b) {
  require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  Var res = tape.result(std::move(out), {&a, &b});
  if (res.requires_grad()) {
    tape.record([a, b, res] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      if (a.requires_grad()) a.node()->grad_buffer() += g;
      if (b.requires_grad()) {
        Tensor& gb = b.node()->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return res;
}

Var scale(Tape& tape, const Var& a, double s) {
  Tensor out = a.value();
  out *= s;
  Var res = tape.result(std::move(out), {&a});
  if (res.requires_grad()) {
    tape.record([a, res, s] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      Tensor& ga = a.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
  }
  return res;
}

Var scale_by(Tape& tape, const Var& a, const Var& s) {
  if (s.value().size() != 1) throw ShapeError("scale_by: scale must hold one element");
  const double sv = s.value()[0];
  Tensor out = a.value();
  out *= sv;
  Var res = tape.result(std::move(out), {&a, &s});
  if (res.requires_grad()) {
    tape.record([a, s, res] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      const double sv = s.value()[0];
      if (a.requires_grad()) {
        Tensor& ga = a.node()->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += sv * g[i];
      }
      if (s.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * a.value()[i];
        s.node()->grad_buffer()[0] += acc;
      }
    });
  }
  return res;
}

Var relu(Tape& tape, const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  Var res = tape.result(std::move(out), {&x});
  if (res.requires_grad()) {
    tape.record([x, res] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      Tensor& gx = x.node()->grad_buffer();
      const Tensor& xv = x.value();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > 0.0) gx[i] += g[i];
    });
  }
  return res;
}

Var tanh(Tape& tape, const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::tanh(v);
  Var res = tape.result(std::move(out), {&x});
  if (res.requires_grad()) {
    tape.record([x, res] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      Tensor& gx = x.node()->grad_buffer();
      const Tensor& y = res.value();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
    });
  }
  return res;
}

Var softmax_lastdim(Tape& tape, const Var& x) {
  const Tensor& xv = x.value();
  if (xv.dim() == 0) throw ShapeError("softmax_lastdim: scalar input");
  const std::size_t n = xv.shape().back();
  const std::size_t rows = n ? xv.size() / n : 0;
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * n;
    double* dst = out.data() + r * n;
    const double m = *std::max_element(src, src + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dst[j] = std::exp(src[j] - m);
      z += dst[j];
    }
    for (std::size_t j = 0; j < n; ++j) dst[j] /= z;
  }
  Var res = tape.result(std::move(out), {&x});
  if (res.requires_grad()) {
    tape.record([x, res, n, rows] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      Tensor& gx = x.node()->grad_buffer();
      const Tensor& y = res.value();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[base + j] * y[base + j];
        for (std::size_t j = 0; j < n; ++j) gx[base + j] += y[base + j] * (g[base + j] - dot);
      }
    });
  }
  return res;
}

// ---------------------------------------------------------------------------
// Convolutions

Var conv1x1(Tape& tape, const Var& x, const Var& w, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.dim() < 2 || wv.dim() != 2 || wv.extent(1) != xv.extent(1)) {
    throw ShapeError("conv1x1: input " + shape_string(xv.shape()) + " weight " + shape_string(wv.shape()));
  }
  const std::size_t batch = xv.extent(0);
  const std::size_t cin = xv.extent(1);
  const std::size_t cout = wv.extent(0);
  const std::size_t spatial = xv.size() / (batch * cin);
  if (bias.defined() && bias.value().size() != cout) throw ShapeError("conv1x1: bias extent");

  Shape out_shape = xv.shape();
  out_shape[1] = cout;
  Tensor out(out_shape);
  ConstMapMat W(wv.data(), cout, cin);
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMapMat X(xv.data() + b * cin * spatial, cin, spatial);
    MapMat Y(out.data() + b * cout * spatial, cout, spatial);
    Y.noalias() = W * X;
    if (bias.defined()) Y.colwise() += ConstMapVec(bias.value().data(), cout);
  }
  Var res = tape.result(std::move(out), {&x, &w, &bias});
  if (res.requires_grad()) {
    tape.record([x, w, bias, res, batch, cin, cout, spatial] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      ConstMapMat W(w.value().data(), cout, cin);
      for (std::size_t b = 0; b < batch; ++b) {
        ConstMapMat G(g.data() + b * cout * spatial, cout, spatial);
        if (x.requires_grad()) {
          MapMat GX(x.node()->grad_buffer().data() + b * cin * spatial, cin, spatial);
          GX.noalias() += W.transpose() * G;
        }
        if (w.requires_grad()) {
          ConstMapMat X(x.value().data() + b * cin * spatial, cin, spatial);
          MapMat GW(w.node()->grad_buffer().data(), cout, cin);
          if (g_corrupt) {
            GW.noalias() += 1.5 * (G * X.transpose());
          } else {
            GW.noalias() += G * X.transpose();
          }
        }
        if (bias.requires_grad()) {
          MapVec GB(bias.node()->grad_buffer().data(), cout);
          GB += G.rowwise().sum();
        }
      }
    });
  }
  return res;
}

namespace {

struct ConvGeometry {
  std::size_t batch, cin, frames, joints, cout, kernel, stride, dilation, pad, out_frames;
};

// col[(c,k), (to,v)] = x[b, c, to*stride + k*dilation - pad, v], zero outside.
void im2col(const double* x, const ConvGeometry& g, double* col) {
  const std::size_t row_len = g.out_frames * g.joints;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t k = 0; k < g.kernel; ++k) {
      double* row = col + (c * g.kernel + k) * row_len;
      for (std::size_t to = 0; to < g.out_frames; ++to) {
        const long ti = static_cast<long>(to * g.stride + k * g.dilation) - static_cast<long>(g.pad);
        double* dst = row + to * g.joints;
        if (ti < 0 || ti >= static_cast<long>(g.frames)) {
          std::fill(dst, dst + g.joints, 0.0);
        } else {
          const double* src = x + (c * g.frames + static_cast<std::size_t>(ti)) * g.joints;
          std::copy(src, src + g.joints, dst);
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* gx) {
  const std::size_t row_len = g.out_frames * g.joints;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t k = 0; k < g.kernel; ++k) {
      const double* row = col + (c * g.kernel + k) * row_len;
      for (std::size_t to = 0; to < g.out_frames; ++to) {
        const long ti = static_cast<long>(to * g.stride + k * g.dilation) - static_cast<long>(g.pad);
        if (ti < 0 || ti >= static_cast<long>(g.frames)) continue;
        double* dst = gx + (c * g.frames + static_cast<std::size_t>(ti)) * g.joints;
        const double* src = row + to * g.joints;
        for (std::size_t v = 0; v < g.joints; ++v) dst[v] += src[v];
      }
    }
  }
}

}  // namespace

Var temporal_conv(Tape& tape, const Var& x, const Var& w, const Var& bias, TemporalConvSpec spec) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (spec.stride < 1 || spec.dilation < 1) throw std::invalid_argument("temporal_conv: stride and dilation must be >= 1");
  if (xv.dim() != 4 || wv.dim() != 3 || wv.extent(1) != xv.extent(1)) {
    throw ShapeError("temporal_conv: input " + shape_string(xv.shape()) + " weight " + shape_string(wv.shape()));
  }
  if (wv.extent(2) % 2 == 0) throw std::invalid_argument("temporal_conv: kernel size must be odd");
  ConvGeometry g{};
  g.batch = xv.extent(0);
  g.cin = xv.extent(1);
  g.frames = xv.extent(2);
  g.joints = xv.extent(3);
  g.cout = wv.extent(0);
  g.kernel = wv.extent(2);
  g.stride = spec.stride;
  g.dilation = spec.dilation;
  g.pad = spec.dilation * (g.kernel - 1) / 2;
  g.out_frames = (g.frames + g.stride - 1) / g.stride;
  if (bias.defined() && bias.value().size() != g.cout) throw ShapeError("temporal_conv: bias extent");

  const std::size_t ck = g.cin * g.kernel;
  const std::size_t cols = g.out_frames * g.joints;
  Tensor out({g.batch, g.cout, g.out_frames, g.joints});
  std::vector<double> col(ck * cols);
  ConstMapMat W(wv.data(), g.cout, ck);
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(xv.data() + b * g.cin * g.frames * g.joints, g, col.data());
    MapMat Y(out.data() + b * g.cout * cols, g.cout, cols);
    Y.noalias() = W * ConstMapMat(col.data(), ck, cols);
    if (bias.defined()) Y.colwise() += ConstMapVec(bias.value().data(), g.cout);
  }
  Var res = tape.result(std::move(out), {&x, &w, &bias});
  if (res.requires_grad()) {
    tape.record([x, w, bias, res, g] {
      const Tensor& grad = res.grad();
      if (grad.empty()) return;
      const std::size_t ck = g.cin * g.kernel;
      const std::size_t cols = g.out_frames * g.joints;
      const std::size_t in_block = g.cin * g.frames * g.joints;
      std::vector<double> col(ck * cols);
      std::vector<double> gcol(ck * cols);
      ConstMapMat W(w.value().data(), g.cout, ck);
      for (std::size_t b = 0; b < g.batch; ++b) {
        ConstMapMat G(grad.data() + b * g.cout * cols, g.cout, cols);
        if (w.requires_grad()) {
          im2col(x.value().data() + b * in_block, g, col.data());
          MapMat GW(w.node()->grad_buffer().data(), g.cout, ck);
          GW.noalias() += G * ConstMapMat(col.data(), ck, cols).transpose();
        }
        if (x.requires_grad()) {
          MapMat GC(gcol.data(), ck, cols);
          GC.noalias() = W.transpose() * G;
          col2im_add(gcol.data(), g, x.node()->grad_buffer().data() + b * in_block);
        }
        if (bias.requires_grad()) {
          MapVec GB(bias.node()->grad_buffer().data(), g.cout);
          GB += G.rowwise().sum();
        }
      }
    });
  }
  return res;
}

Var max_pool_temporal(Tape& tape, const Var& x, std::size_t kernel, std::size_t stride) {
  const Tensor& xv = x.value();
  if (xv.dim() != 4) throw ShapeError("max_pool_temporal: expected (B,C,T,V), got " + shape_string(xv.shape()));
  if (kernel % 2 == 0 || stride < 1) throw std::invalid_argument("max_pool_temporal: odd kernel and stride >= 1 required");
  const std::size_t planes = xv.extent(0) * xv.extent(1);
  const std::size_t frames = xv.extent(2);
  const std::size_t joints = xv.extent(3);
  const std::size_t out_frames = (frames + stride - 1) / stride;
  const long pad = static_cast<long>(kernel / 2);
  Tensor out({xv.extent(0), xv.extent(1), out_frames, joints});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t to = 0; to < out_frames; ++to) {
      for (std::size_t v = 0; v < joints; ++v) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t k = 0; k < kernel; ++k) {
          const long ti = static_cast<long>(to * stride + k) - pad;
          if (ti < 0 || ti >= static_cast<long>(frames)) continue;
          const std::size_t idx = (p * frames + static_cast<std::size_t>(ti)) * joints + v;
          if (xv[idx] > best) {
            best = xv[idx];
            best_idx = idx;
          }
        }
        const std::size_t o = (p * out_frames + to) * joints + v;
        out[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  Var res = tape.result(std::move(out), {&x});
  if (res.requires_grad()) {
    tape.record([x, res, argmax = std::move(argmax)] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      Tensor& gx = x.node()->grad_buffer();
      for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
    });
  }
  return res;
}

// ---------------------------------------------------------------------------
// Batch normalisation

BatchNormState::BatchNormState(std::size_t channels)
    : running_mean(Shape{channels}, 0.0), running_var(Shape{channels}, 1.0) {}

void BatchNormState::reset() {
  running_mean.fill(0.0);
  running_var.fill(1.0);
  initialized = true;
}

Var batch_norm(Tape& tape, const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool training) {
  const Tensor& xv = x.value();
  if (xv.dim() < 2) throw ShapeError("batch_norm: expected (N, C, ...)");
  const std::size_t n = xv.extent(0);
  const std::size_t channels = xv.extent(1);
  const std::size_t inner = xv.size() / (n * channels);
  const std::size_t count = n * inner;
  if (gamma.value().size() != channels || beta.value().size() != channels ||
      state.running_mean.size() != channels) {
    throw ShapeError("batch_norm: parameter extents do not match " + std::to_string(channels) + " channels");
  }
  if (!training && !state.initialized) {
    throw std::logic_error("batch_norm: eval mode before running statistics were initialised");
  }

  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (training) {
      for (std::size_t b = 0; b < n; ++b) {
        const double* src = xv.data() + (b * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) mean += src[i];
      }
      mean /= static_cast<double>(count);
      for (std::size_t b = 0; b < n; ++b) {
        const double* src = xv.data() + (b * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) var += (src[i] - mean) * (src[i] - mean);
      }
      var /= static_cast<double>(count);
      const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
      state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean;
      state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + state.eps);
    const double gc = gamma.value()[c];
    const double bc = beta.value()[c];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const double h = (xv[base + i] - mean) * inv_std[c];
        xhat[base + i] = h;
        out[base + i] = gc * h + bc;
      }
    }
  }
  if (training) state.initialized = true;

  Var res = tape.result(std::move(out), {&x, &gamma, &beta});
  if (res.requires_grad()) {
    tape.record([x, gamma, beta, res, xhat = std::move(xhat), inv_std = std::move(inv_std), n, channels, inner,
                 count, training] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      for (std::size_t c = 0; c < channels; ++c) {
        double sum_g = 0.0;
        double sum_gx = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
          const std::size_t base = (b * channels + c) * inner;
          for (std::size_t i = 0; i < inner; ++i) {
            sum_g += g[base + i];
            sum_gx += g[base + i] * xhat[base + i];
          }
        }
        if (gamma.requires_grad()) gamma.node()->grad_buffer()[c] += sum_gx;
        if (beta.requires_grad()) beta.node()->grad_buffer()[c] += sum_g;
        if (!x.requires_grad()) continue;
        Tensor& gx = x.node()->grad_buffer();
        const double scale = gamma.value()[c] * inv_std[c];
        const double cnt = static_cast<double>(count);
        for (std::size_t b = 0; b < n; ++b) {
          const std::size_t base = (b * channels + c) * inner;
          for (std::size_t i = 0; i < inner; ++i) {
            if (training) {
              gx[base + i] += scale * (g[base + i] - sum_g / cnt - xhat[base + i] * sum_gx / cnt);
            } else {
              gx[base + i] += scale * g[base + i];
            }
          }
        }
      }
    });
  }
  return res;
}

// ---------------------------------------------------------------------------
// Contraction

namespace {

struct EinsumSpec {
  std::string a, b, out;
};

EinsumSpec parse_einsum(std::string_view spec) {
  const auto comma = spec.find(',');
  const auto arrow = spec.find("->");
  if (comma == std::string_view::npos || arrow == std::string_view::npos || comma > arrow) {
    throw std::invalid_argument("contract: malformed spec '" + std::string(spec) + "'");
  }
  EinsumSpec s{std::string(spec.substr(0, comma)), std::string(spec.substr(comma + 1, arrow - comma - 1)),
               std::string(spec.substr(arrow + 2))};
  for (const std::string* part : {&s.a, &s.b, &s.out}) {
    for (std::size_t i = 0; i < part->size(); ++i) {
      const char c = (*part)[i];
      if (c < 'a' || c > 'z') throw std::invalid_argument("contract: labels must be lowercase letters");
      if (part->find(c, i + 1) != std::string::npos) {
        throw std::invalid_argument("contract: repeated label '" + std::string(1, c) + "' in one operand");
      }
    }
  }
  for (char c : s.out) {
    if (s.a.find(c) == std::string::npos && s.b.find(c) == std::string::npos) {
      throw std::invalid_argument("contract: output label '" + std::string(1, c) + "' not in any operand");
    }
  }
  for (char c : s.a)
    if (s.b.find(c) == std::string::npos && s.out.find(c) == std::string::npos)
      throw std::invalid_argument("contract: label '" + std::string(1, c) + "' would be summed within one operand");
  for (char c : s.b)
    if (s.a.find(c) == std::string::npos && s.out.find(c) == std::string::npos)
      throw std::invalid_argument("contract: label '" + std::string(1, c) + "' would be summed within one operand");
  return s;
}

}  // namespace

Tensor permute_values(const Tensor& x, const std::vector<std::size_t>& perm) {
  if (perm.size() != x.dim()) throw ShapeError("permute: rank mismatch");
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw std::invalid_argument("permute: not a permutation");
    seen[p] = true;
  }
  bool identity = true;
  for (std::size_t i = 0; i < perm.size(); ++i) identity = identity && perm[i] == i;
  if (identity) return x;
  Shape out_shape(perm.size());
  const auto in_strides = contiguous_strides(x.shape());
  std::vector<std::size_t> src_strides(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out_shape[i] = x.extent(perm[i]);
    src_strides[i] = in_strides[perm[i]];
  }
  Tensor out(out_shape);
  const auto out_strides = contiguous_strides(out_shape);
  const double* src = x.data();
  double* dst = out.data();
  walk2(out_shape, out_strides, src_strides, [&](std::size_t o, std::size_t i) { dst[o] = src[i]; });
  return out;
}

Tensor contract_values(std::string_view spec_text, const Tensor& a, const Tensor& b) {
  const EinsumSpec s = parse_einsum(spec_text);
  if (s.a.size() != a.dim() || s.b.size() != b.dim()) {
    throw ShapeError("contract: spec '" + std::string(spec_text) + "' vs shapes " + shape_string(a.shape()) + ", " +
                     shape_string(b.shape()));
  }
  std::array<std::size_t, 26> extent{};
  std::array<bool, 26> known{};
  auto note = [&](const std::string& labels, const Tensor& t) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int l = labels[i] - 'a';
      if (known[l] && extent[l] != t.extent(i)) {
        throw ShapeError("contract: extent mismatch on label '" + std::string(1, labels[i]) + "'");
      }
      known[l] = true;
      extent[l] = t.extent(i);
    }
  };
  note(s.a, a);
  note(s.b, b);

  std::string batch, free_a, contr, free_b;
  for (char c : s.out)
    if (s.a.find(c) != std::string::npos && s.b.find(c) != std::string::npos) batch += c;
  for (char c : s.a) {
    const bool in_b = s.b.find(c) != std::string::npos;
    const bool in_out = s.out.find(c) != std::string::npos;
    if (in_b && !in_out) contr += c;
    if (!in_b) free_a += c;
  }
  for (char c : s.b)
    if (s.a.find(c) == std::string::npos) free_b += c;

  auto perm_for = [](const std::string& from, const std::string& to) {
    std::vector<std::size_t> perm;
    for (char c : to) perm.push_back(from.find(c));
    return perm;
  };
  auto prod = [&](const std::string& labels) {
    std::size_t p = 1;
    for (char c : labels) p *= extent[c - 'a'];
    return p;
  };

  const std::size_t nb = prod(batch), m = prod(free_a), k = prod(contr), n = prod(free_b);

  // Operands already laid out as a transposed matrix are read through a
  // transposed view instead of being copied.
  const bool a_t = s.a == batch + contr + free_a && s.a != batch + free_a + contr;
  const bool b_t = s.b == batch + free_b + contr && s.b != batch + contr + free_b;
  const Tensor ap = a_t ? Tensor() : permute_values(a, perm_for(s.a, batch + free_a + contr));
  const Tensor bp = b_t ? Tensor() : permute_values(b, perm_for(s.b, batch + contr + free_b));
  const double* pa = a_t ? a.data() : ap.data();
  const double* pb = b_t ? b.data() : bp.data();

  const bool out_t = s.out == batch + free_b + free_a && s.out != batch + free_a + free_b;
  const std::string mid_labels = out_t ? batch + free_b + free_a : batch + free_a + free_b;
  Shape mid_shape;
  for (char c : mid_labels) mid_shape.push_back(extent[c - 'a']);
  Tensor mid(mid_shape);
  for (std::size_t i = 0; i < nb; ++i) {
    const double* ai = pa + i * m * k;
    const double* bi = pb + i * k * n;
    double* ci = mid.data() + i * m * n;
    auto product = [&](const auto& A, const auto& B) {
      if (out_t) {
        MapMat(ci, n, m).noalias() = B.transpose() * A.transpose();
      } else {
        MapMat(ci, m, n).noalias() = A * B;
      }
    };
    auto with_b = [&](const auto& A) {
      if (b_t) product(A, ConstMapMat(bi, n, k).transpose());
      else product(A, ConstMapMat(bi, k, n));
    };
    if (a_t) with_b(ConstMapMat(ai, k, m).transpose());
    else with_b(ConstMapMat(ai, m, k));
  }
  if (mid_labels == s.out) return mid;
  return permute_values(mid, perm_for(mid_labels, s.out));
}

Var contract(Tape& tape, std::string_view spec_text, const Var& a, const Var& b) {
  Tensor out = contract_values(spec_text, a.value(), b.value());
  Var res = tape.result(std::move(out), {&a, &b});
  if (res.requires_grad()) {
    const EinsumSpec s = parse_einsum(spec_text);
    tape.record([a, b, res, s] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      if (a.requires_grad()) a.node()->grad_buffer() += contract_values(s.out + "," + s.b + "->" + s.a, g, b.value());
      if (b.requires_grad()) b.node()->grad_buffer() += contract_values(s.out + "," + s.a + "->" + s.b, g, a.value());
    });
  }
  return res;
}

Var pairwise_diff(Tape& tape, const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.dim() != 3 || av.shape() != bv.shape()) {
    throw ShapeError("pairwise_diff: expected equal (N,C,V), got " + shape_string(av.shape()) + ", " +
                     shape_string(bv.shape()));
  }
  const std::size_t rows = av.extent(0) * av.extent(1);
  const std::size_t v = av.extent(2);
  Tensor out({av.extent(0), av.extent(1), v, v});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* pa = av.data() + r * v;
    const double* pb = bv.data() + r * v;
    double* dst = out.data() + r * v * v;
    for (std::size_t i = 0; i < v; ++i)
      for (std::size_t j = 0; j < v; ++j) dst[i * v + j] = pa[i] - pb[j];
  }
  Var res = tape.result(std::move(out), {&a, &b});
  if (res.requires_grad()) {
    tape.record([a, b, res, rows, v] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* src = g.data() + r * v * v;
        if (a.requires_grad()) {
          double* ga = a.node()->grad_buffer().data() + r * v;
          for (std::size_t i = 0; i < v; ++i)
            for (std::size_t j = 0; j < v; ++j) ga[i] += src[i * v + j];
        }
        if (b.requires_grad()) {
          double* gb = b.node()->grad_buffer().data() + r * v;
          for (std::size_t i = 0; i < v; ++i)
            for (std::size_t j = 0; j < v; ++j) gb[j] -= src[i * v + j];
        }
      }
    });
  }
  return res;
}

// ---------------------------------------------------------------------------
// Reductions and layout

Var mean_axes(Tape& tape, const Var& x, std::vector<std::size_t> axes) {
  const Tensor& xv = x.value();
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  std::vector<bool> reduced(xv.dim(), false);
  for (std::size_t ax : axes) {
    if (ax >= xv.dim()) throw ShapeError("mean_axes: axis out of range");
    reduced[ax] = true;
  }
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t i = 0; i < xv.dim(); ++i) {
    if (reduced[i]) {
      count *= xv.extent(i);
    } else {
      out_shape.push_back(xv.extent(i));
    }
  }
  if (out_shape.empty()) out_shape.push_back(1);
  // output strides expressed on the input's axes, zero on reduced axes
  std::vector<std::size_t> out_strides(xv.dim(), 0);
  std::size_t stride = 1;
  for (std::size_t i = xv.dim(); i-- > 0;) {
    if (!reduced[i]) {
      out_strides[i] = stride;
      stride *= xv.extent(i);
    }
  }
  const auto in_strides = contiguous_strides(xv.shape());
  Tensor out(out_shape);
  const double inv = 1.0 / static_cast<double>(count);
  walk2(xv.shape(), in_strides, out_strides, [&](std::size_t i, std::size_t o) { out[o] += xv[i]; });
  out *= inv;
  Var res = tape.result(std::move(out), {&x});
  if (res.requires_grad()) {
    tape.record([x, res, in_strides, out_strides, inv] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      Tensor& gx = x.node()->grad_buffer();
      walk2(x.shape(), in_strides, out_strides, [&](std::size_t i, std::size_t o) { gx[i] += g[o] * inv; });
    });
  }
  return res;
}

Var sum_all(Tape& tape, const Var& x) {
  Var res = tape.result(Tensor::scalar(x.value().sum()), {&x});
  if (res.requires_grad()) {
    tape.record([x, res] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      Tensor& gx = x.node()->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
    });
  }
  return res;
}

Var permute(Tape& tape, const Var& x, std::vector<std::size_t> perm) {
  Var res = tape.result(permute_values(x.value(), perm), {&x});
  if (res.requires_grad()) {
    std::vector<std::size_t> inverse(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
    tape.record([x, res, inverse] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      x.node()->grad_buffer() += permute_values(g, inverse);
    });
  }
  return res;
}

Var reshape(Tape& tape, const Var& x, Shape shape) {
  Var res = tape.result(x.value().reshaped(std::move(shape)), {&x});
  if (res.requires_grad()) {
    tape.record([x, res] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      Tensor& gx = x.node()->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
  }
  return res;
}

Var concat(Tape& tape, const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.size() != first.size() || (i != axis && s[i] != first[i])) {
        throw ShapeError("concat: " + shape_string(s) + " vs " + shape_string(first));
      }
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[axis] * inner;
  Tensor out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    const std::size_t row = p.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.value().data() + o * row, row, out.data() + o * out_row + off);
    }
    off += row;
  }
  bool any = false;
  for (const Var& p : parts) any = any || p.requires_grad();
  Var res = tape.result(std::move(out), {});
  if (any && tape.recording()) {
    res.node()->requires_grad = true;
    tape.record([parts, res, offsets, outer, inner, out_row, axis] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      for (std::size_t k = 0; k < parts.size(); ++k) {
        if (!parts[k].requires_grad()) continue;
        Tensor& gp = parts[k].node()->grad_buffer();
        const std::size_t row = parts[k].shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < row; ++i) gp[o * row + i] += g[o * out_row + offsets[k] + i];
      }
    });
  }
  return res;
}

Var select(Tape& tape, const Var& x, std::size_t index) {
  const Tensor& xv = x.value();
  if (xv.dim() < 2 || index >= xv.extent(0)) throw ShapeError("select: index out of range");
  Shape out_shape(xv.shape().begin() + 1, xv.shape().end());
  const std::size_t block = shape_numel(out_shape);
  std::vector<double> values(xv.data() + index * block, xv.data() + (index + 1) * block);
  Var res = tape.result(Tensor(out_shape, std::move(values)), {&x});
  if (res.requires_grad()) {
    tape.record([x, res, index, block] {
      const Tensor& g = res.grad();
      if (g.empty()) return;
      double* gx = x.node()->grad_buffer().data() + index * block;
      for (std::size_t i = 0; i < block; ++i) gx[i] += g[i];
    });
  }
  return res;
}

Var stack(Tape& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack: no inputs");
  std::vector<Var> lifted;
  lifted.reserve(parts.size());
  for (const Var& p : parts) {
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(tape, p, s));
  }
  return concat(tape, lifted, 0);
}

}  // namespace hfgcn::ops
