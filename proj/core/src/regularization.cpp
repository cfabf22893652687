#include "orthonet/regularization.hpp"

#include "orthonet/errors.hpp"

namespace orthonet {

std::string to_string(RegKind kind) {
  switch (kind) {
    case RegKind::None: return "none";
    case RegKind::L2: return "l2";
    case RegKind::Orthonormal: return "orthonormal";
  }
  return "?";
}

RegKind parse_reg_kind(const std::string& name) {
  if (name == "none") return RegKind::None;
  if (name == "l2") return RegKind::L2;
  if (name == "orthonormal" || name == "ortho") return RegKind::Orthonormal;
  throw ConfigError("unknown regularizer '" + name + "' (expected none|l2|orthonormal)");
}

namespace {

void require_matrix(const Tensor& w) {
  if (w.rank() != 2) throw DimensionError("regularizer expects an f_in x f_out matrix, got " + shape_str(w.shape()));
}

// Gram matrix minus identity of columns [begin, end).
Tensor gram_residual(const Tensor& w, const ColumnRange& g) {
  const std::size_t d = w.dim(0), n = g.size();
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < d; ++r) acc += w.at(r, g.begin + i) * w.at(r, g.begin + j);
      if (i == j) acc -= 1.0;
      a.at(i, j) = acc;
      a.at(j, i) = acc;
    }
  }
  return a;
}

}  // namespace

double ortho_penalty(const Tensor& w, double lambda, const GroupPartition& partition) {
  require_matrix(w);
  double total = 0.0;
  for (const ColumnRange& g : partition.groups) {
    const Tensor a = gram_residual(w, g);
    total += dot(a, a);
  }
  return 0.5 * lambda * total;
}

double ortho_penalty(const Tensor& w, double lambda) {
  require_matrix(w);
  return ortho_penalty(w, lambda, GroupPartition{{{0, w.dim(1)}}});
}

Tensor ortho_grad(const Tensor& w, double lambda, const GroupPartition& partition) {
  require_matrix(w);
  const std::size_t d = w.dim(0);
  Tensor grad(w.shape());
  for (const ColumnRange& g : partition.groups) {
    const Tensor a = gram_residual(w, g);
    const std::size_t n = g.size();
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += w.at(r, g.begin + i) * a.at(i, j);
        grad.at(r, g.begin + j) = 2.0 * lambda * acc;
      }
    }
  }
  return grad;
}

Tensor ortho_grad(const Tensor& w, double lambda) {
  require_matrix(w);
  return ortho_grad(w, lambda, GroupPartition{{{0, w.dim(1)}}});
}

double l2_penalty(const Tensor& w, double lambda) { return 0.5 * lambda * dot(w, w); }

Tensor l2_grad(const Tensor& w, double lambda) { return scale(w, lambda); }

double penalty(const RegConfig& config, const Tensor& w, const GroupPartition& partition) {
  switch (config.kind) {
    case RegKind::None: return 0.0;
    case RegKind::L2: return l2_penalty(w, config.lambda);
    case RegKind::Orthonormal: return ortho_penalty(w, config.lambda, partition);
  }
  return 0.0;
}

Tensor penalty_grad(const RegConfig& config, const Tensor& w, const GroupPartition& partition) {
  switch (config.kind) {
    case RegKind::None: return Tensor(w.shape());
    case RegKind::L2: return l2_grad(w, config.lambda);
    case RegKind::Orthonormal: return ortho_grad(w, config.lambda, partition);
  }
  return Tensor(w.shape());
}

}  // namespace orthonet
