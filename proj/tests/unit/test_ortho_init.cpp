#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "orthonet/errors.hpp"
#include "orthonet/ortho_init.hpp"

using namespace orthonet;

namespace {

double col_dot(const Tensor& w, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t r = 0; r < w.dim(0); ++r) s += w.at(r, i) * w.at(r, j);
  return s;
}

// Gram matrix deviation computed directly from column dot products.
double naive_group_error(const Tensor& w, const GroupPartition& p) {
  double worst = 0.0;
  for (const auto& g : p.groups)
    for (std::size_t i = g.begin; i < g.end; ++i)
      for (std::size_t j = g.begin; j < g.end; ++j)
        worst = std::max(worst, std::abs(col_dot(w, i, j) - (i == j ? 1.0 : 0.0)));
  return worst;
}

}  // namespace

TEST(GramSchmidt, OrthogonalPairNormalized) {
  Rng rng(1);
  const Tensor q = gram_schmidt(Tensor::matrix({{3, 0}, {0, 4}}), rng);
  EXPECT_EQ(q, Tensor::matrix({{1, 0}, {0, 1}}));
}

TEST(GramSchmidt, RemovesProjection) {
  Rng rng(1);
  const Tensor q = gram_schmidt(Tensor::matrix({{1, 1}, {0, 1}}), rng);
  EXPECT_NEAR(q.at(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(q.at(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(q.at(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(q.at(1, 1), 1.0, 1e-15);
}

TEST(GramSchmidt, FirstColumnIsNormalizedInput) {
  oracle::Gen g(2);
  Rng rng(2);
  const Tensor v = g.tensor({10, 4});
  const Tensor q = gram_schmidt(v, rng);
  const double n0 = std::sqrt(col_dot(v, 0, 0));
  for (std::size_t r = 0; r < 10; ++r) EXPECT_NEAR(q.at(r, 0), v.at(r, 0) / n0, 1e-14);
}

TEST(GramSchmidt, DependentColumnIsRedrawn) {
  Rng rng(3);
  // Third column is the sum of the first two.
  const Tensor v = Tensor::matrix({{1, 0, 1}, {0, 1, 1}, {0, 0, 0}, {0, 0, 0}});
  const Tensor q = gram_schmidt(v, rng);
  EXPECT_LT(naive_group_error(q, partition_groups(4, 3)), 1e-12);
}

TEST(GramSchmidt, WideMatrixRejected) {
  Rng rng(4);
  EXPECT_THROW(gram_schmidt(Tensor({3, 4}, 1.0), rng), DomainError);
}

TEST(GramSchmidt, OrthonormalInputIsFixedPoint) {
  oracle::Gen g(5);
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = g.size(2, 30), n = g.size(1, d);
    const Tensor q = gram_schmidt(g.tensor({d, n}), rng);
    EXPECT_LT(max_abs_diff(gram_schmidt(q, rng), q), 1e-13);
  }
}

TEST(Partition, Examples) {
  EXPECT_EQ(partition_groups(144, 32).count(), 1u);
  EXPECT_EQ(partition_groups(27, 27).count(), 1u);
  const GroupPartition p = partition_groups(64, 256);
  ASSERT_EQ(p.count(), 4u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(p.groups[k], (ColumnRange{64 * k, 64 * (k + 1)}));
  const GroupPartition q = partition_groups(4, 8);
  ASSERT_EQ(q.count(), 2u);
  EXPECT_EQ(q.groups[1], (ColumnRange{4, 8}));
  const GroupPartition r = partition_groups(3, 10);
  ASSERT_EQ(r.count(), 4u);
  EXPECT_EQ(r.groups.back(), (ColumnRange{9, 10}));
}

TEST(Partition, CoversColumnsDisjointly) {
  oracle::Gen g(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t f_in = g.size(1, 40), f_out = g.size(1, 200);
    const GroupPartition p = partition_groups(f_in, f_out);
    EXPECT_EQ(p.count(), (f_out + f_in - 1) / f_in);
    std::size_t next = 0;
    for (const auto& grp : p.groups) {
      EXPECT_EQ(grp.begin, next);
      EXPECT_GT(grp.size(), 0u);
      EXPECT_LE(grp.size(), f_in);
      next = grp.end;
    }
    EXPECT_EQ(next, f_out);
  }
}

TEST(OrthoInit, ColumnsOrthonormalWithinGroups) {
  oracle::Gen g(7);
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = g.size(0, 1) ? 3 : 1;
    const std::size_t c = g.size(1, 12), m = g.size(1, 80);
    const KernelMatrix km = ortho_init(k, k, c, m, rng);
    const GroupPartition p = partition_groups(km.f_in(), km.f_out());
    EXPECT_LT(naive_group_error(km.matrix(), p), 1e-12);
    EXPECT_LT(orthonormality_error(km.matrix(), p), 1e-12);
    for (std::size_t j = 0; j < m; ++j) EXPECT_NEAR(col_dot(km.matrix(), j, j), 1.0, 1e-12);
  }
}

TEST(OrthoInit, WideLayerBlocksAreEachOrthonormal) {
  Rng rng(8);
  const KernelMatrix km = ortho_init(1, 1, 4, 8, rng);
  const GroupPartition p = partition_groups(4, 8);
  EXPECT_LT(naive_group_error(km.matrix(), p), 1e-12);
  // Across groups the columns are independent draws, not orthogonal.
  double cross = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 4; j < 8; ++j) cross = std::max(cross, std::abs(col_dot(km.matrix(), i, j)));
  EXPECT_GT(cross, 1e-3);
}

TEST(OrthoInit, SameSeedSameKernel) {
  Rng a(9), b(9);
  EXPECT_EQ(ortho_init(3, 3, 16, 32, a), ortho_init(3, 3, 16, 32, b));
}

TEST(OrthoMatrix, IsometryOnRandomVectors) {
  Rng rng(10);
  oracle::Gen g(10);
  const Tensor w = ortho_matrix(64, 16, rng);
  for (int t = 0; t < 100; ++t) {
    const Tensor d = g.tensor({16, 1});
    const double nd = frobenius_norm(d);
    EXPECT_NEAR(frobenius_norm(matmul(w, d)), nd, 1e-12 * nd);
  }
}

TEST(MsraInit, EmpiricalVarianceMatchesFanIn) {
  Rng rng(11);
  const KernelMatrix km = msra_init(3, 3, 64, 256, rng);
  const double expected = 2.0 / 576.0;
  EXPECT_NEAR(second_moment(km.matrix()), expected, 0.02 * expected);
}

TEST(GaussianInit, UsesGivenStd) {
  Rng rng(12);
  const KernelMatrix km = gaussian_init(3, 3, 32, 64, 0.01, rng);
  EXPECT_NEAR(std::sqrt(second_moment(km.matrix())), 0.01, 3e-4);
}

TEST(OrthonormalityError, DetectsPerturbation) {
  Rng rng(13);
  Tensor w = ortho_matrix(10, 5, rng);
  const GroupPartition p = partition_groups(10, 5);
  EXPECT_LT(orthonormality_error(w, p), 1e-13);
  w.at(0, 0) += 1e-3;
  EXPECT_NEAR(orthonormality_error(w, p), naive_group_error(w, p), 1e-15);
  EXPECT_GT(orthonormality_error(w, p), 1e-4);
}
