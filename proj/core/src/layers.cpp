#include "orthonet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "orthonet/errors.hpp"

namespace orthonet {

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w;  // input
  std::size_t oh, ow;      // output spatial
  std::size_t kh, kw, stride, pad;
  std::size_t f_in() const { return c * kh * kw; }
  std::size_t positions() const { return oh * ow; }
};

ConvGeometry conv_geometry(const ConvLayer& layer, const Shape& in) {
  if (in.size() != 4) {
    throw DimensionError("conv expects an NCHW input, got " + shape_str(in));
  }
  const KernelMatrix& k = layer.kernel;
  if (in[1] != k.channels()) {
    throw DimensionError("conv channel mismatch: input " + shape_str(in) + " vs kernel with " +
                         std::to_string(k.channels()) + " channels");
  }
  if (layer.stride == 0) throw DimensionError("conv stride must be positive");
  if (in[2] + 2 * layer.pad < k.kh() || in[3] + 2 * layer.pad < k.kw()) {
    throw DimensionError("conv kernel " + std::to_string(k.kh()) + "x" +
                         std::to_string(k.kw()) + " does not fit input " + shape_str(in) +
                         " with pad " + std::to_string(layer.pad));
  }
  ConvGeometry g{};
  g.n = in[0];
  g.c = in[1];
  g.h = in[2];
  g.w = in[3];
  g.kh = k.kh();
  g.kw = k.kw();
  g.stride = layer.stride;
  g.pad = layer.pad;
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  return g;
}

// col is f_in x (oh*ow) for one image.
void im2col(const ConvGeometry& g, const double* img, double* col) {
  const std::size_t p_count = g.positions();
  for (std::size_t c = 0; c < g.c; ++c) {
    const double* plane = img + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* dst = col + ((c * g.kh + ky) * g.kw + kx) * p_count;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          double* drow = dst + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(drow, drow + g.ow, 0.0);
            continue;
          }
          const double* srow = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            drow[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w))
                           ? 0.0
                           : srow[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* col, double* img) {
  const std::size_t p_count = g.positions();
  for (std::size_t c = 0; c < g.c; ++c) {
    double* plane = img + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* src = col + ((c * g.kh + ky) * g.kw + kx) * p_count;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* drow = plane + static_cast<std::size_t>(iy) * g.w;
          const double* srow = src + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            drow[static_cast<std::size_t>(ix)] += srow[ox];
          }
        }
      }
    }
  }
}

struct ChannelLayout {
  std::size_t n, c, spatial;
  std::size_t population() const { return n * spatial; }
};

ChannelLayout channel_layout(const Shape& s) {
  if (s.size() == 2) return {s[0], s[1], 1};
  if (s.size() == 4) return {s[0], s[1], s[2] * s[3]};
  throw DimensionError("batch norm expects [N,C] or [N,C,H,W], got " + shape_str(s));
}

}  // namespace

// ---------------------------------------------------------------------------

Shape conv_output_shape(const ConvLayer& layer, const Shape& input) {
  const ConvGeometry g = conv_geometry(layer, input);
  return {g.n, layer.kernel.outputs(), g.oh, g.ow};
}

Tensor conv_forward(const ConvLayer& layer, const Tensor& x) {
  const ConvGeometry g = conv_geometry(layer, x.shape());
  const std::size_t m = layer.kernel.outputs();
  const std::size_t p = g.positions();
  const std::size_t f_in = g.f_in();
  Tensor out({g.n, m, g.oh, g.ow});
  std::vector<double> col(f_in * p);
  const auto w = layer.kernel.matrix().data();
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(g, x.data().data() + n * g.c * g.h * g.w, col.data());
    // out_n (M x P) = W^T (M x f_in) * col (f_in x P)
    gemm(Trans::Yes, Trans::No, m, p, f_in, 1.0, w, col, 0.0,
         out.data().subspan(n * m * p, m * p));
  }
  return out;
}

ConvGrads conv_backward(const ConvLayer& layer, const Tensor& x, const Tensor& d_out) {
  const ConvGeometry g = conv_geometry(layer, x.shape());
  const std::size_t m = layer.kernel.outputs();
  const std::size_t p = g.positions();
  const std::size_t f_in = g.f_in();
  const Shape expected{g.n, m, g.oh, g.ow};
  if (d_out.shape() != expected) {
    throw DimensionError("conv_backward: upstream gradient " + shape_str(d_out.shape()) +
                         " does not match output shape " + shape_str(expected));
  }
  ConvGrads grads{Tensor(x.shape()), Tensor({f_in, m})};
  Tensor dw_t({m, f_in});  // accumulated as dW^T = dOut * col^T
  std::vector<double> col(f_in * p);
  std::vector<double> col_t(p * f_in);
  std::vector<double> dcol(f_in * p);
  const auto w = layer.kernel.matrix().data();
  for (std::size_t n = 0; n < g.n; ++n) {
    const auto dout_n = d_out.data().subspan(n * m * p, m * p);
    im2col(g, x.data().data() + n * g.c * g.h * g.w, col.data());
    for (std::size_t r = 0; r < f_in; ++r)
      for (std::size_t q = 0; q < p; ++q) col_t[q * f_in + r] = col[r * p + q];
    gemm(Trans::No, Trans::No, m, f_in, p, 1.0, dout_n, col_t, 1.0, dw_t.data());
    // dcol (f_in x P) = W (f_in x M) * dOut_n (M x P)
    gemm(Trans::No, Trans::No, f_in, p, m, 1.0, w, dout_n, 0.0, dcol);
    col2im(g, dcol.data(), grads.dx.data().data() + n * g.c * g.h * g.w);
  }
  grads.dw = transpose(dw_t);
  return grads;
}

// ---------------------------------------------------------------------------

BatchNormState make_batch_norm(std::size_t channels, double eps, double momentum) {
  if (eps < 0.0) throw DomainError("batch norm eps must be >= 0");
  BatchNormState s;
  s.gamma = Tensor({channels}, 1.0);
  s.beta = Tensor({channels}, 0.0);
  s.eps = eps;
  s.momentum = momentum;
  s.mu_b = Tensor({channels});
  s.var_b = Tensor({channels});
  s.running_mu = Tensor({channels}, 0.0);
  s.running_var = Tensor({channels}, 1.0);
  return s;
}

Tensor bn_forward(BatchNormState& state, const Tensor& x, bool training) {
  const ChannelLayout l = channel_layout(x.shape());
  if (state.gamma.size() != l.c) {
    throw DimensionError("batch norm has " + std::to_string(state.gamma.size()) +
                         " channels, input " + shape_str(x.shape()));
  }
  Tensor y(x.shape());
  const auto xd = x.data();
  auto yd = y.data();

  if (!training) {
    for (std::size_t n = 0; n < l.n; ++n) {
      for (std::size_t c = 0; c < l.c; ++c) {
        const double inv = 1.0 / std::sqrt(state.running_var[c] + state.eps);
        const double mu = state.running_mu[c];
        const std::size_t base = (n * l.c + c) * l.spatial;
        for (std::size_t i = 0; i < l.spatial; ++i)
          yd[base + i] = state.gamma[c] * (xd[base + i] - mu) * inv + state.beta[c];
      }
    }
    return y;
  }

  const std::size_t m = l.population();
  if (m < 2) {
    throw DomainError("batch norm training needs at least 2 values per channel, got " +
                      std::to_string(m));
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  state.mu_b = Tensor({l.c});
  state.var_b = Tensor({l.c});
  state.x_hat = Tensor(x.shape());
  auto xh = state.x_hat.data();

  for (std::size_t c = 0; c < l.c; ++c) {
    double acc = 0.0;
    for (std::size_t n = 0; n < l.n; ++n) {
      const std::size_t base = (n * l.c + c) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) acc += xd[base + i];
    }
    const double mu = acc * inv_m;
    double var_acc = 0.0;
    for (std::size_t n = 0; n < l.n; ++n) {
      const std::size_t base = (n * l.c + c) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) {
        const double d = xd[base + i] - mu;
        var_acc += d * d;
      }
    }
    const double var = var_acc * inv_m;
    if (var + state.eps <= 0.0) {
      throw DomainError("batch norm: zero variance in channel " + std::to_string(c) +
                        " with eps = 0");
    }
    state.mu_b[c] = mu;
    state.var_b[c] = var;
    const double inv = 1.0 / std::sqrt(var + state.eps);
    for (std::size_t n = 0; n < l.n; ++n) {
      const std::size_t base = (n * l.c + c) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) {
        const double h = (xd[base + i] - mu) * inv;
        xh[base + i] = h;
        yd[base + i] = state.gamma[c] * h + state.beta[c];
      }
    }
    const double unbiased = var * static_cast<double>(m) / static_cast<double>(m - 1);
    state.running_mu[c] = state.momentum * state.running_mu[c] + (1.0 - state.momentum) * mu;
    state.running_var[c] =
        state.momentum * state.running_var[c] + (1.0 - state.momentum) * unbiased;
  }
  state.has_cache = true;
  return y;
}

BnGrads bn_backward(const BatchNormState& state, const Tensor& dy) {
  if (!state.has_cache) throw StateError("bn_backward called without a training forward");
  require_same_shape(state.x_hat, dy, "bn_backward");
  const ChannelLayout l = channel_layout(dy.shape());
  const double m = static_cast<double>(l.population());
  BnGrads g{Tensor(dy.shape()), Tensor({l.c}), Tensor({l.c})};
  const auto dyd = dy.data();
  const auto xh = state.x_hat.data();
  auto dx = g.dx.data();

  for (std::size_t c = 0; c < l.c; ++c) {
    const double gamma = state.gamma[c];
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t n = 0; n < l.n; ++n) {
      const std::size_t base = (n * l.c + c) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) {
        sum_dy += dyd[base + i];
        sum_dy_xh += dyd[base + i] * xh[base + i];
      }
    }
    g.dbeta[c] = sum_dy;
    g.dgamma[c] = sum_dy_xh;
    // delta = dY * gamma; mean(delta) and sum(delta * x_hat) follow by linearity.
    const double mu_delta = gamma * sum_dy / m;
    const double proj = gamma * sum_dy_xh / m;
    const double inv = 1.0 / std::sqrt(state.var_b[c] + state.eps);
    for (std::size_t n = 0; n < l.n; ++n) {
      const std::size_t base = (n * l.c + c) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) {
        const double delta = dyd[base + i] * gamma;
        dx[base + i] = inv * (delta - mu_delta - xh[base + i] * proj);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  require_same_shape(x, dy, "relu_backward");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

// ---------------------------------------------------------------------------

FcLayer make_fc(std::size_t f_in, std::size_t f_out) {
  return FcLayer{Tensor({f_in, f_out}), Tensor({f_out})};
}

namespace {

std::size_t fc_batch(const FcLayer& layer, const Tensor& x) {
  if (layer.weight.rank() != 2 || layer.bias.size() != layer.weight.dim(1)) {
    throw DimensionError("fc layer weight " + shape_str(layer.weight.shape()) + " and bias " +
                         shape_str(layer.bias.shape()) + " disagree");
  }
  if (x.rank() < 1 || x.size() != x.dim(0) * layer.weight.dim(0)) {
    throw DimensionError("fc input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(layer.weight.shape()));
  }
  return x.dim(0);
}

}  // namespace

Tensor fc_forward(const FcLayer& layer, const Tensor& x) {
  const std::size_t n = fc_batch(layer, x);
  const std::size_t f_in = layer.weight.dim(0), f_out = layer.weight.dim(1);
  Tensor y({n, f_out});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f_out; ++j) y.at(i, j) = layer.bias[j];
  gemm(Trans::No, Trans::No, n, f_out, f_in, 1.0, x.data(), layer.weight.data(), 1.0, y.data());
  return y;
}

FcGrads fc_backward(const FcLayer& layer, const Tensor& x, const Tensor& dy) {
  const std::size_t n = fc_batch(layer, x);
  const std::size_t f_in = layer.weight.dim(0), f_out = layer.weight.dim(1);
  if (dy.shape() != Shape{n, f_out}) {
    throw DimensionError("fc_backward: upstream gradient " + shape_str(dy.shape()) +
                         " expected " + shape_str({n, f_out}));
  }
  FcGrads g{Tensor(x.shape()), Tensor({f_in, f_out}), Tensor({f_out})};
  gemm(Trans::No, Trans::Yes, n, f_in, f_out, 1.0, dy.data(), layer.weight.data(), 0.0,
       g.dx.data());
  gemm(Trans::Yes, Trans::No, f_in, f_out, n, 1.0, x.data(), dy.data(), 0.0, g.dw.data());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f_out; ++j) g.db[j] += dy.at(i, j);
  return g;
}

// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("softmax expects [N, K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p.at(i, j) = std::exp(logits.at(i, j) - mx);
      z += p.at(i, j);
    }
    for (std::size_t j = 0; j < k; ++j) p.at(i, j) /= z;
  }
  return p;
}

SoftmaxXent softmax_xent(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("softmax_xent: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw DomainError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                        " outside [0, " + std::to_string(k) + ")");
    }
  }
  SoftmaxXent out;
  out.d_logits = Tensor(logits.shape());
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(logits.at(i, j) - mx);
    const double log_z = std::log(z) + mx;
    const auto y = static_cast<std::size_t>(labels[i]);
    loss += log_z - logits.at(i, y);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(logits.at(i, j) - log_z);
      out.d_logits.at(i, j) = (p - (j == y ? 1.0 : 0.0)) * inv_n;
    }
  }
  out.loss = loss * inv_n;
  return out;
}

// ---------------------------------------------------------------------------

Tensor global_avg_pool_forward(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("global average pool expects NCHW, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), s = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < s; ++k) acc += x[i * s + k];
    y[i] = acc / static_cast<double>(s);
  }
  return y;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& dy) {
  if (input_shape.size() != 4 || dy.shape() != Shape{input_shape[0], input_shape[1]}) {
    throw DimensionError("global average pool backward: " + shape_str(dy.shape()) + " vs input " +
                         shape_str(input_shape));
  }
  const std::size_t s = input_shape[2] * input_shape[3];
  Tensor dx(input_shape);
  const double inv = 1.0 / static_cast<double>(s);
  for (std::size_t i = 0; i < dy.size(); ++i)
    for (std::size_t k = 0; k < s; ++k) dx[i * s + k] = dy[i] * inv;
  return dx;
}

}  // namespace orthonet
