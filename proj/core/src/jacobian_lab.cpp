#include "orthonet/jacobian_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "orthonet/csv.hpp"
#include "orthonet/errors.hpp"
#include "orthonet/rng.hpp"

namespace orthonet {

BnJacobianBlock build_block(std::span<const double> x, double gamma, double eps) {
  const std::size_t m = x.size();
  if (m < 2) throw DomainError("build_block needs a batch of at least 2 values");
  if (eps < 0.0) throw DomainError("eps must be >= 0");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(m);
  if (var + eps <= 0.0) throw DomainError("build_block: zero-variance batch with eps = 0");

  BnJacobianBlock b;
  b.m = m;
  b.variance = var;
  const double inv = 1.0 / std::sqrt(var + eps);
  b.rho = gamma * inv;
  b.x_hat = Tensor({m});
  for (std::size_t i = 0; i < m; ++i) b.x_hat[i] = (x[i] - mean) * inv;
  b.jacobian = Tensor({m, m});
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double delta = i == j ? 1.0 : 0.0;
      b.jacobian.at(i, j) = b.rho * (delta - (1.0 + b.x_hat[i] * b.x_hat[j]) * inv_m);
    }
  }
  return b;
}

Tensor build_u(const Tensor& x_hat) {
  const std::size_t m = x_hat.size();
  Tensor u({m, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) u.at(i, j) = 1.0 + x_hat[i] * x_hat[j];
  return u;
}

namespace {

double off_diagonal_norm(const Tensor& a) {
  const std::size_t n = a.dim(0);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) acc += a.at(i, j) * a.at(i, j);
  return std::sqrt(acc);
}

}  // namespace

Spectrum eig_sym(const Tensor& input) {
  if (input.rank() != 2 || input.dim(0) != input.dim(1)) {
    throw DimensionError("eig_sym expects a square matrix, got " + shape_str(input.shape()));
  }
  const std::size_t n = input.dim(0);
  if (max_abs_diff(input, transpose(input)) >= 1e-9) {
    throw DomainError("eig_sym: matrix is not symmetric");
  }
  Tensor a = input;
  // Symmetrize exactly so rotations see a perfectly symmetric matrix.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a.at(i, j) = a.at(j, i) = 0.5 * (a.at(i, j) + a.at(j, i));
  Tensor v = Tensor::identity(n);

  const double scale_norm = frobenius_norm(a);
  const double target = 1e-15 * std::max(scale_norm, 1e-300);
  Spectrum s;
  double off = off_diagonal_norm(a);
  double prev = INFINITY;
  while (off > target && s.sweeps < 100 && off < prev) {
    prev = off;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 0.5 / theta;
        } else {
          t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - sn * akq;
          a.at(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - sn * aqk;
          a.at(q, k) = sn * apk + c * aqk;
        }
        a.at(p, q) = 0.0;
        a.at(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - sn * vkq;
          v.at(k, q) = sn * vkp + c * vkq;
        }
      }
    }
    ++s.sweeps;
    off = off_diagonal_norm(a);
  }
  s.off_diagonal = off;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a.at(i, i) > a.at(j, j); });
  s.eigenvalues.resize(n);
  s.eigenvectors = Tensor({n, n});
  for (std::size_t k = 0; k < n; ++k) {
    s.eigenvalues[k] = a.at(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) s.eigenvectors.at(r, k) = v.at(r, order[k]);
  }
  return s;
}

Tensor reconstruct(const Spectrum& s) {
  const std::size_t n = s.eigenvalues.size();
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        acc += s.eigenvectors.at(i, k) * s.eigenvalues[k] * s.eigenvectors.at(j, k);
      out.at(i, j) = acc;
    }
  }
  return out;
}

QuasiIsometryReport verify_quasi_isometry(const QuasiIsometryConfig& config) {
  if (config.m < 2) throw DomainError("verify_quasi_isometry needs m >= 2");
  QuasiIsometryReport report;
  report.config = config;
  Rng rng(config.seed);
  const std::size_t m = config.m;
  const double md = static_cast<double>(m);

  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    std::vector<double> x(m);
    for (double& v : x) v = rng.normal();
    BnJacobianBlock block = build_block(x, config.gamma * config.relu_scale, config.eps);
    const double rho = block.rho;

    QuasiIsometryTrial row;
    row.trial = trial;
    row.rho = rho;

    const Tensor u = build_u(block.x_hat);
    const Spectrum su = eig_sym(u);
    row.lambda1 = su.eigenvalues[0];
    row.lambda2 = su.eigenvalues[1];
    const Tensor u2 = matmul(u, u);
    row.u_square_residual = frobenius_norm(sub(u2, scale(u, md))) / frobenius_norm(u);

    const Spectrum sj = eig_sym(block.jacobian);
    // The defect pair is the two eigenvalues farthest from rho.
    std::vector<double> mu = sj.eigenvalues;
    std::sort(mu.begin(), mu.end(), [rho](double p, double q) {
      return std::abs(p - rho) > std::abs(q - rho);
    });
    row.defect_max = std::max(std::abs(mu[0]), std::abs(mu[1]));
    for (std::size_t k = 2; k < m; ++k) row.max_bulk_dev = std::max(row.max_bulk_dev, std::abs(mu[k] - rho));
    const double null_tol = 1e-8 * std::max(1.0, std::abs(rho));
    for (double e : sj.eigenvalues)
      if (std::abs(e) <= null_tol) ++row.rank_defect;

    // Projector onto the complement of span{e, x_hat}.
    Tensor proj = Tensor::identity(m);
    const double xx = dot(block.x_hat, block.x_hat);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        proj.at(i, j) -= 1.0 / md;
        if (xx > 0.0) proj.at(i, j) -= block.x_hat[i] * block.x_hat[j] / xx;
      }
    }
    Tensor jjt = matmul(block.jacobian, transpose(block.jacobian));
    for (std::size_t i = 0; i < m; ++i) jjt.at(i, i) -= rho * rho;
    row.bulk_isometry_dev = frobenius_norm(matmul(jjt, proj));

    report.trials.push_back(row);
  }
  return report;
}

void write_quasi_isometry_csv(std::ostream& os, const QuasiIsometryReport& report) {
  os << "trial,rho,lambda1,lambda2,max_bulk_dev,rank_defect\n";
  for (const auto& t : report.trials) {
    os << t.trial << ',' << csv::format(t.rho) << ',' << csv::format(t.lambda1) << ','
       << csv::format(t.lambda2) << ',' << csv::format(t.max_bulk_dev) << ',' << t.rank_defect
       << '\n';
  }
}

}  // namespace orthonet
