#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "orthonet/tensor.hpp"

namespace orthonet {

/// Jacobian of single-channel batch normalization over a batch of m scalars:
/// J[i][j] = rho * (delta_ij - (1 + x_hat_i * x_hat_j) / m), rho = gamma / sqrt(var + eps).
struct BnJacobianBlock {
  std::size_t m = 0;
  double rho = 0.0;
  double variance = 0.0;  // biased batch variance
  Tensor x_hat;           // length m
  Tensor jacobian;        // m x m, symmetric
};

BnJacobianBlock build_block(std::span<const double> x, double gamma, double eps);

/// U[i][j] = 1 + x_hat_i * x_hat_j, i.e. e e^T + x_hat x_hat^T.
Tensor build_u(const Tensor& x_hat);

struct Spectrum {
  std::vector<double> eigenvalues;  // descending
  Tensor eigenvectors;              // column k pairs with eigenvalues[k]
  double off_diagonal = 0.0;        // Frobenius norm of the off-diagonal residue
  int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for symmetric matrices. Throws DomainError when
/// max |M - M^T| >= 1e-9.
Spectrum eig_sym(const Tensor& m);

/// V diag(lambda) V^T.
Tensor reconstruct(const Spectrum& s);

struct QuasiIsometryConfig {
  std::size_t m = 32;
  double gamma = 1.0;
  double eps = 0.0;
  std::size_t trials = 10;
  std::uint64_t seed = 1;
  double relu_scale = 1.0;  // scalar folded into rho
};

struct QuasiIsometryTrial {
  std::size_t trial = 0;
  double rho = 0.0;
  double lambda1 = 0.0;       // largest eigenvalue of U
  double lambda2 = 0.0;       // second largest eigenvalue of U
  double max_bulk_dev = 0.0;  // max |mu - rho| over the m-2 bulk eigenvalues of J
  std::size_t rank_defect = 0;
  double defect_max = 0.0;          // max |mu| over the two defect eigenvalues of J
  double bulk_isometry_dev = 0.0;   // ||(J J^T - rho^2 I) Q||_F, Q projects off span{e, x_hat}
  double u_square_residual = 0.0;   // ||U^2 - m U||_F / ||U||_F
};

struct QuasiIsometryReport {
  QuasiIsometryConfig config;
  std::vector<QuasiIsometryTrial> trials;
};

/// Draws `trials` Gaussian batches of size m and measures the Jacobian
/// spectrum against {0, 0, rho x (m-2)}.
QuasiIsometryReport verify_quasi_isometry(const QuasiIsometryConfig& config);

/// CSV with header trial,rho,lambda1,lambda2,max_bulk_dev,rank_defect.
void write_quasi_isometry_csv(std::ostream& os, const QuasiIsometryReport& report);

}  // namespace orthonet
