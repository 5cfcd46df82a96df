/*
 * Copyright 2026 The tsbackdoor Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "tsb/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "tsb/errors.hpp"

namespace tsb::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

void require(bool cond, const char* what) {
  if (!cond) throw InvalidArgument(what);
}

// Batched im2col: cols(i*K + k, n*T_out + t) = x(n, i, t + k*dilation - pad_left),
// zero outside [0, T).
void im2col(const Tensor& x, int kernel, const ConvGeometry& g, int out_length, RowMat& cols) {
  const Shape s = x.shape();
  const std::ptrdiff_t ld = cols.cols();
  for (int n = 0; n < s.n; ++n) {
    for (int i = 0; i < s.c; ++i) {
      const double* src = x.row(n, i);
      for (int k = 0; k < kernel; ++k) {
        double* dst = cols.data() + (i * kernel + k) * ld + static_cast<std::ptrdiff_t>(n) * out_length;
        const int shift = k * g.dilation - g.pad_left;
        const int t0 = std::clamp(-shift, 0, out_length);
        const int t1 = std::clamp(s.t - shift, t0, out_length);
        std::fill(dst, dst + t0, 0.0);
        std::memcpy(dst + t0, src + t0 + shift, sizeof(double) * (t1 - t0));
        std::fill(dst + t1, dst + out_length, 0.0);
      }
    }
  }
}

void col2im_add(const RowMat& cols, int kernel, const ConvGeometry& g, int out_length,
                Tensor& dx) {
  const Shape s = dx.shape();
  const std::ptrdiff_t ld = cols.cols();
  for (int n = 0; n < s.n; ++n) {
    for (int i = 0; i < s.c; ++i) {
      double* dst = dx.row(n, i);
      for (int k = 0; k < kernel; ++k) {
        const double* src =
            cols.data() + (i * kernel + k) * ld + static_cast<std::ptrdiff_t>(n) * out_length;
        const int shift = k * g.dilation - g.pad_left;
        const int t0 = std::clamp(-shift, 0, out_length);
        const int t1 = std::clamp(s.t - shift, t0, out_length);
        for (int t = t0; t < t1; ++t) dst[t + shift] += src[t];
      }
    }
  }
}

template <typename F, typename G>
Var unary(const Var& x, F forward, G derivative_from_output) {
  Tensor out = Tensor::uninitialized(x->value.shape());
  const double* in = x->value.data();
  double* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] = forward(in[i]);
  return make_result(std::move(out), {x}, [derivative_from_output](Node& self) {
    Node& a = *self.inputs[0];
    double* ga = a.grad_buffer().data();
    const double* g = self.grad.data();
    const double* y = self.value.data();
    const double* xin = a.value.data();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      ga[i] += g[i] * derivative_from_output(y[i], xin[i]);
    }
  });
}

// Valid output range [t0, t1) for tap k: input index t + shift stays in [0, T).
struct TapRange {
  int shift;
  int t0;
  int t1;
};

TapRange tap_range(int k, const ConvGeometry& g, int length, int out_length) {
  const int shift = k * g.dilation - g.pad_left;
  const int t0 = std::clamp(-shift, 0, out_length);
  const int t1 = std::clamp(length - shift, t0, out_length);
  return {shift, t0, t1};
}

// Dot product with four fixed partial sums, so it vectorizes without
// reassociating floating point differently from run to run.
double dot(const double* a, const double* b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int t = 0;
  for (; t + 4 <= n; t += 4) {
    s0 += a[t] * b[t];
    s1 += a[t + 1] * b[t + 1];
    s2 += a[t + 2] * b[t + 2];
    s3 += a[t + 3] * b[t + 3];
  }
  for (; t < n; ++t) s0 += a[t] * b[t];
  return (s0 + s1) + (s2 + s3);
}

// Narrow layers: one vectorizable axpy per (out, in, tap) beats building the
// im2col matrix, whose size dominates when channel counts are small.
bool use_direct(const Shape& ws) { return ws.n * ws.c <= 256; }

void conv_direct_forward(const Tensor& x, const Tensor& w, const ConvGeometry& g, Tensor& out) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  const int out_len = out.shape().t;
  for (int n = 0; n < xs.n; ++n) {
    for (int o = 0; o < ws.n; ++o) {
      double* y = out.row(n, o);
      for (int i = 0; i < ws.c; ++i) {
        const double* xr = x.row(n, i);
        const double* wr = w.row(o, i);
        for (int k = 0; k < ws.t; ++k) {
          const auto r = tap_range(k, g, xs.t, out_len);
          const double wk = wr[k];
          const double* src = xr + r.shift;
          for (int t = r.t0; t < r.t1; ++t) y[t] += wk * src[t];
        }
      }
    }
  }
}

void conv_direct_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                          const ConvGeometry& g, Tensor* dx, Tensor* dw) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  const int out_len = dy.shape().t;
  for (int n = 0; n < xs.n; ++n) {
    for (int o = 0; o < ws.n; ++o) {
      const double* gy = dy.row(n, o);
      for (int i = 0; i < ws.c; ++i) {
        const double* xr = x.row(n, i);
        const double* wr = w.row(o, i);
        double* dxr = dx ? dx->row(n, i) : nullptr;
        double* dwr = dw ? dw->row(o, i) : nullptr;
        for (int k = 0; k < ws.t; ++k) {
          const auto r = tap_range(k, g, xs.t, out_len);
          if (dwr) dwr[k] += dot(gy + r.t0, xr + r.shift + r.t0, r.t1 - r.t0);
          if (dxr) {
            const double wk = wr[k];
            double* dst = dxr + r.shift;
            for (int t = r.t0; t < r.t1; ++t) dst[t] += wk * gy[t];
          }
        }
      }
    }
  }
}

}  // namespace

ConvGeometry same_padding(int kernel, int dilation) {
  const int total = dilation * (kernel - 1);
  return ConvGeometry{dilation, total / 2, total - total / 2};
}

ConvGeometry causal_padding(int kernel, int dilation) {
  return ConvGeometry{dilation, dilation * (kernel - 1), 0};
}

Var conv1d(const Var& x, const Var& weight, const Var& bias, ConvGeometry g) {
  const Shape xs = x->value.shape();
  const Shape ws = weight->value.shape();
  require(xs.c == ws.c, "conv1d: input channels do not match weight");
  require(g.dilation >= 1, "conv1d: dilation must be positive");
  const int cout = ws.n;
  const int kernel = ws.t;
  const int cin_k = ws.c * kernel;
  const int out_len = xs.t + g.pad_left + g.pad_right - g.dilation * (kernel - 1);
  require(out_len > 0, "conv1d: input shorter than the dilated kernel");
  if (bias) require(bias->value.size() == static_cast<std::size_t>(cout), "conv1d: bias size");

  Tensor out = Tensor::uninitialized(Shape{xs.n, cout, out_len});
  if (use_direct(ws)) {
    for (int n = 0; n < xs.n; ++n) {
      for (int o = 0; o < cout; ++o) {
        double* dst = out.row(n, o);
        std::fill(dst, dst + out_len, bias ? bias->value[o] : 0.0);
      }
    }
    conv_direct_forward(x->value, weight->value, g, out);
  } else {
    const int cols_n = xs.n * out_len;
    RowMat cols(cin_k, cols_n);
    im2col(x->value, kernel, g, out_len, cols);
    RowMat y(cout, cols_n);
    y.noalias() = ConstRowMap(weight->value.data(), cout, cin_k) * cols;
    for (int n = 0; n < xs.n; ++n) {
      for (int o = 0; o < cout; ++o) {
        const double b = bias ? bias->value[o] : 0.0;
        const double* src = y.data() + static_cast<std::ptrdiff_t>(o) * cols_n +
                            static_cast<std::ptrdiff_t>(n) * out_len;
        double* dst = out.row(n, o);
        for (int t = 0; t < out_len; ++t) dst[t] = src[t] + b;
      }
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs), [g](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    const Shape xs = xn.value.shape();
    const Shape ws = wn.value.shape();
    const int cout = ws.n;
    const int kernel = ws.t;
    const int cin_k = ws.c * kernel;
    const int out_len = self.value.shape().t;
    const int cols_n = xs.n * out_len;
    Node* bn = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;

    if (bn && bn->requires_grad) {
      double* db = bn->grad_buffer().data();
      for (int n = 0; n < xs.n; ++n) {
        for (int o = 0; o < cout; ++o) {
          const double* gy = self.grad.row(n, o);
          double acc = 0.0;
          for (int t = 0; t < out_len; ++t) acc += gy[t];
          db[o] += acc;
        }
      }
    }
    if (!xn.requires_grad && !wn.requires_grad) return;
    if (use_direct(ws)) {
      conv_direct_backward(xn.value, wn.value, self.grad, g,
                           xn.requires_grad ? &xn.grad_buffer() : nullptr,
                           wn.requires_grad ? &wn.grad_buffer() : nullptr);
      return;
    }
    RowMat dy(cout, cols_n);
    for (int n = 0; n < xs.n; ++n) {
      for (int o = 0; o < cout; ++o) {
        std::memcpy(dy.data() + static_cast<std::ptrdiff_t>(o) * cols_n +
                        static_cast<std::ptrdiff_t>(n) * out_len,
                    self.grad.row(n, o), sizeof(double) * out_len);
      }
    }
    if (wn.requires_grad) {
      RowMat cols(cin_k, cols_n);
      im2col(xn.value, kernel, g, out_len, cols);
      RowMap dw(wn.grad_buffer().data(), cout, cin_k);
      dw.noalias() += dy * cols.transpose();
    }
    if (xn.requires_grad) {
      RowMat dcols(cin_k, cols_n);
      dcols.noalias() = ConstRowMap(wn.value.data(), cout, cin_k).transpose() * dy;
      col2im_add(dcols, kernel, g, out_len, xn.grad_buffer());
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, const BatchNormArgs& args) {
  const Shape s = x->value.shape();
  require(args.running_mean && args.running_var, "batch_norm: missing running buffers");
  require(gamma->value.size() == static_cast<std::size_t>(s.c), "batch_norm: gamma size");
  const double count = static_cast<double>(s.n) * s.t;

  std::vector<double> mean(s.c), inv_std(s.c);
  if (args.use_batch_stats) {
    require(count > 1, "batch_norm: batch statistics need more than one value per channel");
    for (int c = 0; c < s.c; ++c) {
      double sum = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* r = x->value.row(n, c);
        for (int t = 0; t < s.t; ++t) sum += r[t];
      }
      const double m = sum / count;
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* r = x->value.row(n, c);
        for (int t = 0; t < s.t; ++t) sq += (r[t] - m) * (r[t] - m);
      }
      const double var = sq / count;
      mean[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + args.eps);
      if (args.update_running) {
        double& rm = args.running_mean->value[c];
        double& rv = args.running_var->value[c];
        rm = (1.0 - args.momentum) * rm + args.momentum * m;
        rv = (1.0 - args.momentum) * rv + args.momentum * (sq / (count - 1.0));
      }
    }
  } else {
    for (int c = 0; c < s.c; ++c) {
      mean[c] = args.running_mean->value[c];
      inv_std[c] = 1.0 / std::sqrt(args.running_var->value[c] + args.eps);
    }
  }

  Tensor out = Tensor::uninitialized(s);
  Tensor xhat = Tensor::uninitialized(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* r = x->value.row(n, c);
      double* h = xhat.row(n, c);
      double* o = out.row(n, c);
      const double gm = gamma->value[c];
      const double bt = beta->value[c];
      for (int t = 0; t < s.t; ++t) {
        h[t] = (r[t] - mean[c]) * inv_std[c];
        o[t] = gm * h[t] + bt;
      }
    }
  }

  const bool batch_stats = args.use_batch_stats;
  return make_result(
      std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), batch_stats, count](Node& self) {
        Node& xn = *self.inputs[0];
        Node& gn = *self.inputs[1];
        Node& bn = *self.inputs[2];
        const Shape s = self.value.shape();
        for (int c = 0; c < s.c; ++c) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int n = 0; n < s.n; ++n) {
            const double* g = self.grad.row(n, c);
            const double* h = xhat.row(n, c);
            for (int t = 0; t < s.t; ++t) {
              sum_dy += g[t];
              sum_dy_xhat += g[t] * h[t];
            }
          }
          if (gn.requires_grad) gn.grad_buffer()[c] += sum_dy_xhat;
          if (bn.requires_grad) bn.grad_buffer()[c] += sum_dy;
          if (!xn.requires_grad) continue;
          const double gm = gn.value[c];
          Tensor& dx = xn.grad_buffer();
          for (int n = 0; n < s.n; ++n) {
            const double* g = self.grad.row(n, c);
            const double* h = xhat.row(n, c);
            double* d = dx.row(n, c);
            if (batch_stats) {
              // d/dx of the normalized value includes the batch mean/var paths.
              const double k = gm * inv_std[c] / count;
              for (int t = 0; t < s.t; ++t) {
                d[t] += k * (count * g[t] - sum_dy - h[t] * sum_dy_xhat);
              }
            } else {
              const double k = gm * inv_std[c];
              for (int t = 0; t < s.t; ++t) d[t] += k * g[t];
            }
          }
        }
      });
}

namespace {
thread_local BranchTrace* g_trace = nullptr;
}  // namespace

BranchTrace::BranchTrace() : previous_(g_trace) { g_trace = this; }
BranchTrace::~BranchTrace() { g_trace = previous_; }

void BranchTrace::record(int branch) {
  if (g_trace) g_trace->branches_.push_back(branch);
}

Var relu(const Var& x) {
  if (g_trace) {
    for (double v : x->value.values()) BranchTrace::record(v > 0.0);
  }
  return unary(
      x, [](double v) { return v > 0.0 || std::isnan(v) ? v : 0.0; },
      [](double, double in) { return in > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double y, double) { return y * (1.0 - y); });
}

Var tanh(const Var& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double y, double) { return 1.0 - y * y; });
}

Var max_pool1d(const Var& x, int kernel, int stride, int pad_left, int pad_right) {
  const Shape s = x->value.shape();
  require(kernel >= 1 && stride >= 1, "max_pool1d: kernel and stride must be positive");
  const int out_len = (s.t + pad_left + pad_right - kernel) / stride + 1;
  require(out_len > 0, "max_pool1d: input too short");
  Tensor out = Tensor::uninitialized(Shape{s.n, s.c, out_len});
  std::vector<int> argmax_index(out.size());
  std::size_t idx = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* r = x->value.row(n, c);
      double* o = out.row(n, c);
      for (int t = 0; t < out_len; ++t, ++idx) {
        const int start = t * stride - pad_left;
        double best = -std::numeric_limits<double>::infinity();
        int best_at = -1;
        for (int k = 0; k < kernel; ++k) {
          const int p = start + k;
          if (p < 0 || p >= s.t) continue;
          if (best_at < 0 || r[p] > best || std::isnan(r[p])) {
            best = r[p];
            best_at = p;
          }
        }
        require(best_at >= 0, "max_pool1d: window covers only padding");
        o[t] = best;
        argmax_index[idx] = best_at;
        if (g_trace) BranchTrace::record(best_at);
      }
    }
  }
  return make_result(std::move(out), {x}, [argmax_index = std::move(argmax_index)](Node& self) {
    Node& a = *self.inputs[0];
    Tensor& ga = a.grad_buffer();
    const Shape s = self.value.shape();
    std::size_t idx = 0;
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double* g = self.grad.row(n, c);
        double* d = ga.row(n, c);
        for (int t = 0; t < s.t; ++t, ++idx) d[argmax_index[idx]] += g[t];
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require(a->value.shape() == b->value.shape(), "add: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      Tensor& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require(a->value.shape() == b->value.shape(), "mul: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& an = *self.inputs[0];
    Node& bn = *self.inputs[1];
    if (an.requires_grad) {
      Tensor& g = an.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.value[i];
    }
    if (bn.requires_grad) {
      Tensor& g = bn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.value[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  return make_result(std::move(out), {a}, [factor](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_channels: nothing to concatenate");
  const Shape first = parts.front()->value.shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape s = p->value.shape();
    require(s.n == first.n && s.t == first.t, "concat_channels: batch/time mismatch");
    channels += s.c;
  }
  Tensor out = Tensor::uninitialized(Shape{first.n, channels, first.t});
  for (int n = 0; n < first.n; ++n) {
    int offset = 0;
    for (const auto& p : parts) {
      const Shape s = p->value.shape();
      std::memcpy(out.row(n, offset), p->value.row(n, 0), sizeof(double) * s.c * s.t);
      offset += s.c;
    }
  }
  return make_result(std::move(out), parts, [](Node& self) {
    const Shape s = self.value.shape();
    int offset = 0;
    for (const auto& p : self.inputs) {
      const Shape ps = p->value.shape();
      if (p->requires_grad) {
        Tensor& g = p->grad_buffer();
        for (int n = 0; n < s.n; ++n) {
          const double* src = self.grad.row(n, offset);
          double* dst = g.row(n, 0);
          for (std::size_t i = 0; i < static_cast<std::size_t>(ps.c) * ps.t; ++i) dst[i] += src[i];
        }
      }
      offset += ps.c;
    }
  });
}

Var slice_channels(const Var& x, int begin, int count) {
  const Shape s = x->value.shape();
  require(begin >= 0 && count > 0 && begin + count <= s.c, "slice_channels: out of range");
  Tensor out = Tensor::uninitialized(Shape{s.n, count, s.t});
  for (int n = 0; n < s.n; ++n) {
    std::memcpy(out.row(n, 0), x->value.row(n, begin), sizeof(double) * count * s.t);
  }
  return make_result(std::move(out), {x}, [begin](Node& self) {
    const Shape s = self.value.shape();
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      const double* src = self.grad.row(n, 0);
      double* dst = g.row(n, begin);
      for (std::size_t i = 0; i < static_cast<std::size_t>(s.c) * s.t; ++i) dst[i] += src[i];
    }
  });
}

Var scale_channels(const Var& x, const Var& s) {
  const Shape xs = x->value.shape();
  require(s->value.shape() == (Shape{xs.n, xs.c, 1}), "scale_channels: scale must be (N, C, 1)");
  Tensor out = x->value;
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const double f = s->value.at(n, c, 0);
      double* r = out.row(n, c);
      for (int t = 0; t < xs.t; ++t) r[t] *= f;
    }
  }
  return make_result(std::move(out), {x, s}, [](Node& self) {
    Node& xn = *self.inputs[0];
    Node& sn = *self.inputs[1];
    const Shape xs = xn.value.shape();
    for (int n = 0; n < xs.n; ++n) {
      for (int c = 0; c < xs.c; ++c) {
        const double* g = self.grad.row(n, c);
        if (xn.requires_grad) {
          double* d = xn.grad_buffer().row(n, c);
          const double f = sn.value.at(n, c, 0);
          for (int t = 0; t < xs.t; ++t) d[t] += g[t] * f;
        }
        if (sn.requires_grad) {
          const double* r = xn.value.row(n, c);
          double acc = 0.0;
          for (int t = 0; t < xs.t; ++t) acc += g[t] * r[t];
          sn.grad_buffer().at(n, c, 0) += acc;
        }
      }
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x->value.reshaped(shape);
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var global_avg_pool(const Var& x) {
  const Shape s = x->value.shape();
  Tensor out = Tensor::uninitialized(Shape{s.n, s.c, 1});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* r = x->value.row(n, c);
      double acc = 0.0;
      for (int t = 0; t < s.t; ++t) acc += r[t];
      out.at(n, c, 0) = acc / s.t;
    }
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& a = *self.inputs[0];
    const Shape s = a.value.shape();
    Tensor& g = a.grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double v = self.grad.at(n, c, 0) / s.t;
        double* d = g.row(n, c);
        for (int t = 0; t < s.t; ++t) d[t] += v;
      }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Shape xs = x->value.shape();
  const Shape ws = weight->value.shape();
  require(xs.t == 1, "linear: input must be (N, F, 1)");
  require(ws.c == xs.c && ws.t == 1, "linear: weight must be (O, F, 1)");
  const int out_f = ws.n;
  Tensor out = Tensor::uninitialized(Shape{xs.n, out_f, 1});
  ConstRowMap xin(x->value.data(), xs.n, xs.c);
  ConstRowMap w(weight->value.data(), out_f, xs.c);
  RowMap y(out.data(), xs.n, out_f);
  y.noalias() = xin * w.transpose();
  if (bias) {
    require(bias->value.size() == static_cast<std::size_t>(out_f), "linear: bias size");
    for (int n = 0; n < xs.n; ++n) {
      for (int o = 0; o < out_f; ++o) y(n, o) += bias->value[o];
    }
  }
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs), [](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    const Shape xs = xn.value.shape();
    const int out_f = wn.value.shape().n;
    ConstRowMap dy(self.grad.data(), xs.n, out_f);
    if (xn.requires_grad) {
      RowMap dx(xn.grad_buffer().data(), xs.n, xs.c);
      dx.noalias() += dy * ConstRowMap(wn.value.data(), out_f, xs.c);
    }
    if (wn.requires_grad) {
      RowMap dw(wn.grad_buffer().data(), out_f, xs.c);
      dw.noalias() += dy.transpose() * ConstRowMap(xn.value.data(), xs.n, xs.c);
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      double* db = self.inputs[2]->grad_buffer().data();
      for (int o = 0; o < out_f; ++o) db[o] += dy.col(o).sum();
    }
  });
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double m = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - m);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

int argmax(std::span<const double> values) {
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

Var cross_entropy(const Var& logits, std::span<const int> labels, Reduction reduction) {
  const Shape s = logits->value.shape();
  require(s.t == 1, "cross_entropy: logits must be (N, K, 1)");
  require(labels.size() == static_cast<std::size_t>(s.n), "cross_entropy: label count");
  Tensor probs(s);
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    const int y = labels[n];
    require(y >= 0 && y < s.c, "cross_entropy: label out of range");
    std::span<const double> row(logits->value.row(n, 0), s.c);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (int k = 0; k < s.c; ++k) z += std::exp(row[k] - m);
    const double log_z = m + std::log(z);
    total += log_z - row[y];
    for (int k = 0; k < s.c; ++k) probs.at(n, k, 0) = std::exp(row[k] - log_z);
  }
  const double norm = reduction == Reduction::kMean ? 1.0 / s.n : 1.0;
  std::vector<int> y(labels.begin(), labels.end());
  return make_result(Tensor(Shape{1, 1, 1}, total * norm), {logits},
                     [probs = std::move(probs), y = std::move(y), norm](Node& self) {
                       Tensor& g = self.inputs[0]->grad_buffer();
                       const Shape s = g.shape();
                       const double up = self.grad[0] * norm;
                       for (int n = 0; n < s.n; ++n) {
                         for (int k = 0; k < s.c; ++k) {
                           const double onehot = k == y[n] ? 1.0 : 0.0;
                           g.at(n, k, 0) += up * (probs.at(n, k, 0) - onehot);
                         }
                       }
                     });
}

Var mean_squared_norm(const Var& logits, const Tensor& target) {
  const Shape s = logits->value.shape();
  require(target.shape() == s, "mean_squared_norm: target shape mismatch");
  Tensor diff = logits->value;
  double total = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] -= target[i];
    total += diff[i] * diff[i];
  }
  const double norm = 1.0 / s.n;
  return make_result(Tensor(Shape{1, 1, 1}, total * norm), {logits},
                     [diff = std::move(diff), norm](Node& self) {
                       Tensor& g = self.inputs[0]->grad_buffer();
                       const double up = self.grad[0] * 2.0 * norm;
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * diff[i];
                     });
}

}  // namespace tsb::nn
