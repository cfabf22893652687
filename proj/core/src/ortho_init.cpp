#include "orthonet/ortho_init.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "orthonet/errors.hpp"

namespace orthonet {

KernelMatrix::KernelMatrix(std::size_t kw, std::size_t kh, std::size_t channels,
                           std::size_t outputs)
    : KernelMatrix(kw, kh, channels, outputs, Tensor({kw * kh * channels, outputs})) {}

KernelMatrix::KernelMatrix(std::size_t kw, std::size_t kh, std::size_t channels,
                           std::size_t outputs, Tensor values)
    : kw_(kw), kh_(kh), channels_(channels), outputs_(outputs), values_(std::move(values)) {
  if (kw == 0 || kh == 0 || channels == 0 || outputs == 0) {
    throw DimensionError("kernel dimensions must be >= 1");
  }
  if (values_.shape() != Shape{f_in(), f_out()}) {
    throw DimensionError("kernel matrix " + shape_str(values_.shape()) + " does not match " +
                         shape_str({f_in(), f_out()}));
  }
}

Tensor KernelMatrix::to_tensor() const {
  Tensor t({kw_, kh_, channels_, outputs_});
  auto d = t.data();
  for (std::size_t x = 0; x < kw_; ++x)
    for (std::size_t y = 0; y < kh_; ++y)
      for (std::size_t c = 0; c < channels_; ++c)
        for (std::size_t m = 0; m < outputs_; ++m)
          d[((x * kh_ + y) * channels_ + c) * outputs_ + m] = values_.at(row(c, y, x), m);
  return t;
}

KernelMatrix KernelMatrix::from_tensor(const Tensor& t) {
  if (t.rank() != 4) throw DimensionError("kernel tensor must be (kW,kH,C,M), got " + shape_str(t.shape()));
  KernelMatrix k(t.dim(0), t.dim(1), t.dim(2), t.dim(3));
  const auto d = t.data();
  for (std::size_t x = 0; x < k.kw_; ++x)
    for (std::size_t y = 0; y < k.kh_; ++y)
      for (std::size_t c = 0; c < k.channels_; ++c)
        for (std::size_t m = 0; m < k.outputs_; ++m)
          k.values_.at(k.row(c, y, x), m) = d[((x * k.kh_ + y) * k.channels_ + c) * k.outputs_ + m];
  return k;
}

// ---------------------------------------------------------------------------

GroupPartition partition_groups(std::size_t f_in, std::size_t f_out) {
  if (f_in == 0 || f_out == 0) throw DomainError("partition_groups needs f_in, f_out >= 1");
  GroupPartition p;
  for (std::size_t begin = 0; begin < f_out; begin += f_in) {
    p.groups.push_back({begin, std::min(f_out, begin + f_in)});
  }
  return p;
}

namespace {

double column_dot(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  const std::size_t d = a.dim(0);
  double acc = 0.0;
  for (std::size_t r = 0; r < d; ++r) acc += a.at(r, i) * b.at(r, j);
  return acc;
}

}  // namespace

Tensor gram_schmidt(const Tensor& vectors, Rng& rng) {
  if (vectors.rank() != 2) throw DimensionError("gram_schmidt expects a d x n matrix");
  const std::size_t d = vectors.dim(0), n = vectors.dim(1);
  if (n > d) {
    throw DomainError("cannot orthonormalize " + std::to_string(n) + " vectors in " +
                      std::to_string(d) + " dimensions; use partition_groups for group-wise init");
  }
  Tensor q = vectors;
  const double redraw_std = std::sqrt(2.0 / static_cast<double>(d));
  for (std::size_t j = 0; j < n; ++j) {
    for (int attempt = 0;; ++attempt) {
      const double original = std::sqrt(column_dot(q, j, q, j));
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < j; ++i) {
          const double proj = column_dot(q, i, q, j);
          for (std::size_t r = 0; r < d; ++r) q.at(r, j) -= proj * q.at(r, i);
        }
      }
      const double residual = std::sqrt(column_dot(q, j, q, j));
      if (original > 0.0 && residual > kDegenerateResidual * original) {
        for (std::size_t r = 0; r < d; ++r) q.at(r, j) /= residual;
        break;
      }
      if (attempt > 64) throw DomainError("gram_schmidt: could not draw an independent column");
      for (std::size_t r = 0; r < d; ++r) q.at(r, j) = redraw_std * rng.normal();
    }
  }
  return q;
}

Tensor ortho_matrix(std::size_t f_in, std::size_t f_out, Rng& rng) {
  Tensor w = gaussian(rng, {f_in, f_out}, 0.0, std::sqrt(2.0 / static_cast<double>(f_in)));
  for (const ColumnRange& g : partition_groups(f_in, f_out).groups) {
    Tensor block({f_in, g.size()});
    for (std::size_t r = 0; r < f_in; ++r)
      for (std::size_t j = 0; j < g.size(); ++j) block.at(r, j) = w.at(r, g.begin + j);
    block = gram_schmidt(block, rng);
    for (std::size_t r = 0; r < f_in; ++r)
      for (std::size_t j = 0; j < g.size(); ++j) w.at(r, g.begin + j) = block.at(r, j);
  }
  return w;
}

KernelMatrix ortho_init(std::size_t kw, std::size_t kh, std::size_t channels,
                        std::size_t outputs, Rng& rng) {
  if (kw == 0 || kh == 0 || channels == 0 || outputs == 0) {
    throw DimensionError("kernel dimensions must be >= 1");
  }
  return KernelMatrix(kw, kh, channels, outputs, ortho_matrix(kw * kh * channels, outputs, rng));
}

KernelMatrix msra_init(std::size_t kw, std::size_t kh, std::size_t channels,
                       std::size_t outputs, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(kw * kh * channels));
  return gaussian_init(kw, kh, channels, outputs, std, rng);
}

KernelMatrix gaussian_init(std::size_t kw, std::size_t kh, std::size_t channels,
                           std::size_t outputs, double std, Rng& rng) {
  if (kw == 0 || kh == 0 || channels == 0 || outputs == 0) {
    throw DimensionError("kernel dimensions must be >= 1");
  }
  return KernelMatrix(kw, kh, channels, outputs,
                      gaussian(rng, {kw * kh * channels, outputs}, 0.0, std));
}

double orthonormality_error(const Tensor& w, const GroupPartition& partition) {
  double worst = 0.0;
  for (const ColumnRange& g : partition.groups) {
    for (std::size_t i = g.begin; i < g.end; ++i) {
      for (std::size_t j = g.begin; j < g.end; ++j) {
        const double target = i == j ? 1.0 : 0.0;
        worst = std::max(worst, std::abs(column_dot(w, i, w, j) - target));
      }
    }
  }
  return worst;
}

}  // namespace orthonet
