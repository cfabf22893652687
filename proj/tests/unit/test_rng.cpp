#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "orthonet/rng.hpp"

using namespace orthonet;

TEST(Rng, BitStreamIsMt19937_64) {
  // The standard fixes the 10000th output of a default-seeded mt19937_64.
  Rng rng(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, UniformFormula) {
  Rng a(7);
  std::mt19937_64 e(7);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    EXPECT_EQ(u, static_cast<double>(e() >> 11) * 0x1.0p-53);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.normal(), b.normal());
}

TEST(Rng, IndexStaysInRangeAndCoversIt) {
  Rng rng(3);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const std::size_t k = rng.index(7);
    ASSERT_LT(k, 7u);
    ++hits[k];
  }
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Rng, DeriveIsIndependentOfParentUse) {
  Rng a(11);
  const Rng d1 = a.derive(3);
  a.next_u64();
  a.next_u64();
  Rng d2 = a.derive(3);
  Rng d1c = d1;
  EXPECT_EQ(d1c.next_u64(), d2.next_u64());
  Rng other = a.derive(4);
  Rng d3 = a.derive(3);
  EXPECT_NE(other.next_u64(), d3.next_u64());
}

TEST(Rng, PermutationIsAPermutation) {
  Rng rng(5);
  for (std::size_t n : {0u, 1u, 2u, 17u, 500u}) {
    auto p = rng.permutation(n);
    std::sort(p.begin(), p.end());
    std::vector<std::size_t> id(n);
    std::iota(id.begin(), id.end(), std::size_t{0});
    EXPECT_EQ(p, id);
  }
}

TEST(Rng, NormalMoments) {
  Rng rng(8);
  double s = 0, s2 = 0, s4 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
  EXPECT_NEAR(s4 / n, 3.0, 0.1);
}

TEST(Rng, Splitmix64KnownValue) {
  // Reference output of splitmix64 for state 0 (first draw of the canonical generator).
  EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL);
}
