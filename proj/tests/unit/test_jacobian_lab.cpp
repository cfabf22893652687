#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "orthonet/errors.hpp"
#include "orthonet/jacobian_lab.hpp"
#include "orthonet/layers.hpp"

using namespace orthonet;

namespace {

std::vector<double> draw(oracle::Gen& g, std::size_t m) {
  std::vector<double> x(m);
  for (double& v : x) v = g.normal(1.0, 2.0);
  return x;
}

// Central-difference Jacobian of a single-channel training-mode BN.
Tensor fd_jacobian(const std::vector<double>& x, double gamma, double eps) {
  const std::size_t m = x.size();
  const double h = 1e-6;
  Tensor j({m, m});
  for (std::size_t c = 0; c < m; ++c) {
    auto eval = [&](double dx) {
      BatchNormState bn = make_batch_norm(1, eps);
      bn.gamma[0] = gamma;
      Tensor in({m, 1}, x);
      in[c] += dx;
      return bn_forward(bn, in, true);
    };
    const Tensor p = eval(h), n = eval(-h);
    for (std::size_t r = 0; r < m; ++r) j.at(r, c) = (p[r] - n[r]) / (2 * h);
  }
  return j;
}

Tensor apply(const Tensor& a, const Tensor& v) { return matmul(a, v.reshaped({v.size(), 1})); }

}  // namespace

TEST(BnJacobian, AnnihilatesOnesAndXHat) {
  oracle::Gen g(1);
  for (std::size_t m : {2u, 5u, 32u}) {
    const BnJacobianBlock b = build_block(draw(g, m), 1.3, 0.0);
    EXPECT_LT(max_abs(apply(b.jacobian, Tensor({m}, 1.0))), 1e-12);
    EXPECT_LT(max_abs(apply(b.jacobian, b.x_hat)), 1e-12);
    EXPECT_LT(max_abs_diff(b.jacobian, transpose(b.jacobian)), 1e-15);
  }
}

TEST(BnJacobian, MatchesFiniteDifferenceOfForward) {
  oracle::Gen g(2);
  for (std::size_t m : {3u, 8u, 20u}) {
    for (double eps : {0.0, 0.1}) {
      const auto x = draw(g, m);
      const BnJacobianBlock b = build_block(x, 0.7, eps);
      EXPECT_LT(oracle::rel_frobenius(b.jacobian, fd_jacobian(x, 0.7, eps)), 1e-6);
    }
  }
}

TEST(BnJacobian, GammaDoublesRho) {
  oracle::Gen g(3);
  const auto x = draw(g, 10);
  const BnJacobianBlock a = build_block(x, 1.0, 0.0), b = build_block(x, 2.0, 0.0);
  EXPECT_NEAR(b.rho, 2.0 * a.rho, 1e-14);
  EXPECT_LT(max_abs_diff(b.jacobian, scale(a.jacobian, 2.0)), 1e-13);
}

TEST(BnJacobian, EpsEqualToVarianceHalvesRhoSquared) {
  const std::vector<double> x{1.0, -1.0, 3.0, -3.0};  // variance 5
  const BnJacobianBlock b = build_block(x, 1.0, 5.0);
  EXPECT_NEAR(b.rho, 1.0 / std::sqrt(10.0), 1e-15);
  EXPECT_NEAR(dot(b.x_hat, b.x_hat), 4.0 * 0.5, 1e-14);  // sum x_hat^2 = m var/(var+eps)
}

TEST(BnJacobian, Errors) {
  EXPECT_THROW(build_block(std::vector<double>{1.0}, 1.0, 0.0), DomainError);
  EXPECT_THROW(build_block(std::vector<double>{2.0, 2.0}, 1.0, 0.0), DomainError);
  EXPECT_THROW(build_block(std::vector<double>{1.0, 2.0}, 1.0, -1.0), DomainError);
}

TEST(EigSym, DiagonalAndTwoByTwo) {
  const Spectrum d = eig_sym(Tensor::matrix({{3, 0, 0}, {0, -1, 0}, {0, 0, 7}}));
  EXPECT_EQ(d.eigenvalues, (std::vector<double>{7, 3, -1}));
  const Spectrum s = eig_sym(Tensor::matrix({{2, 1}, {1, 2}}));
  EXPECT_NEAR(s.eigenvalues[0], 3.0, 1e-14);
  EXPECT_NEAR(s.eigenvalues[1], 1.0, 1e-14);
  EXPECT_NEAR(std::abs(s.eigenvectors.at(0, 0)), 1.0 / std::sqrt(2.0), 1e-14);
}

TEST(EigSym, ReconstructsRandomSymmetric) {
  oracle::Gen g(4);
  const Tensor a = g.tensor({50, 50});
  const Tensor sym = scale(add(a, transpose(a)), 0.5);
  const Spectrum s = eig_sym(sym);
  EXPECT_LT(oracle::rel_frobenius(reconstruct(s), sym), 1e-12);
  EXPECT_TRUE(std::is_sorted(s.eigenvalues.rbegin(), s.eigenvalues.rend()));
  const Tensor vtv = matmul(transpose(s.eigenvectors), s.eigenvectors);
  EXPECT_LT(max_abs_diff(vtv, Tensor::identity(50)), 1e-12);
  double trace = 0.0, eig_sum = 0.0;
  for (std::size_t i = 0; i < 50; ++i) trace += sym.at(i, i);
  for (double e : s.eigenvalues) eig_sum += e;
  EXPECT_NEAR(trace, eig_sum, 1e-10);
}

TEST(EigSym, RejectsAsymmetric) {
  EXPECT_THROW(eig_sym(Tensor::matrix({{1, 2}, {0, 1}})), DomainError);
}

TEST(BuildU, RankTwoWithEigenvaluesM) {
  oracle::Gen g(5);
  for (std::size_t m : {4u, 16u, 64u}) {
    const BnJacobianBlock b = build_block(draw(g, m), 1.0, 0.0);
    const Tensor u = build_u(b.x_hat);
    const Spectrum s = eig_sym(u);
    const double md = static_cast<double>(m);
    EXPECT_NEAR(s.eigenvalues[0] / md, 1.0, 1e-10);
    EXPECT_NEAR(s.eigenvalues[1] / md, 1.0, 1e-10);
    for (std::size_t k = 2; k < m; ++k) EXPECT_LT(std::abs(s.eigenvalues[k]), 1e-10 * md);
    EXPECT_LT(oracle::rel_frobenius(matmul(u, u), scale(u, md)), 1e-12);
  }
}

TEST(QuasiIsometry, SpectrumIsTwoZerosAndRhoBulk) {
  QuasiIsometryConfig cfg;
  cfg.m = 32;
  cfg.trials = 5;
  const QuasiIsometryReport r = verify_quasi_isometry(cfg);
  ASSERT_EQ(r.trials.size(), 5u);
  for (const auto& t : r.trials) {
    EXPECT_EQ(t.rank_defect, 2u);
    EXPECT_LT(t.defect_max, 1e-10);
    EXPECT_LT(t.max_bulk_dev, 1e-10);
    EXPECT_LT(t.bulk_isometry_dev, 1e-10);
    EXPECT_LT(t.u_square_residual, 1e-12);
  }
  std::ostringstream os;
  write_quasi_isometry_csv(os, r);
  const std::string csv = os.str();
  EXPECT_EQ(csv.rfind("trial,rho,lambda1,lambda2,max_bulk_dev,rank_defect\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST(QuasiIsometry, PositiveEpsShrinksTheNullSpace) {
  // With eps > 0 the x_hat direction is no longer annihilated exactly.
  QuasiIsometryConfig cfg;
  cfg.m = 16;
  cfg.trials = 3;
  cfg.eps = 0.5;
  for (const auto& t : verify_quasi_isometry(cfg).trials) EXPECT_EQ(t.rank_defect, 1u);
}
