#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "orthonet/data.hpp"
#include "orthonet/errors.hpp"

using namespace orthonet;

namespace {

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream os(p, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Two hand-built records: label 3 with pixel byte (i % 256), label 9 all 255.
std::vector<unsigned char> fixture() {
  std::vector<unsigned char> b;
  b.push_back(3);
  for (std::size_t i = 0; i < kCifarPixels; ++i) b.push_back(static_cast<unsigned char>(i % 256));
  b.push_back(9);
  for (std::size_t i = 0; i < kCifarPixels; ++i) b.push_back(255);
  return b;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const IngestionError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Cifar, ReadsHandBuiltRecords) {
  const auto dir = oracle::temp_dir("cifar");
  write_bytes(dir / "b.bin", fixture());
  const Dataset ds = load_cifar10_file(dir / "b.bin", Split::Test);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.labels, (std::vector<int>{3, 9}));
  EXPECT_EQ(ds.images.shape(), (Shape{2, 3, 32, 32}));
  EXPECT_DOUBLE_EQ(ds.images.at(0, 0, 0, 5), 5.0 / 255.0);
  EXPECT_DOUBLE_EQ(ds.images.at(0, 1, 0, 0), (1024 % 256) / 255.0);  // green plane starts at byte 1024
  EXPECT_DOUBLE_EQ(ds.images.at(0, 2, 31, 31), 255.0 / 255.0);
  EXPECT_EQ(ds.images.at(1, 2, 7, 9), 1.0);
  EXPECT_EQ(load_cifar10_file(dir / "b.bin", Split::Train, 1).size(), 1u);
}

TEST(Cifar, WriteReadRoundTrip) {
  const auto dir = oracle::temp_dir("cifar_rt");
  write_bytes(dir / "a.bin", fixture());
  const Dataset ds = load_cifar10_file(dir / "a.bin", Split::Train);
  write_cifar10_file(dir / "b.bin", ds);
  const Dataset back = load_cifar10_file(dir / "b.bin", Split::Train);
  EXPECT_EQ(back.images, ds.images);
  EXPECT_EQ(back.labels, ds.labels);
}

TEST(Cifar, RejectsBadLabelWithRecordIndex) {
  const auto dir = oracle::temp_dir("cifar_bad");
  auto b = fixture();
  b[kCifarRecord] = 10;
  write_bytes(dir / "x.bin", b);
  const std::string msg = message_of([&] { load_cifar10_file(dir / "x.bin", Split::Train); });
  EXPECT_NE(msg.find("record 1"), std::string::npos) << msg;
  EXPECT_NE(msg.find(std::to_string(kCifarRecord)), std::string::npos) << msg;
}

TEST(Cifar, RejectsShortAndMissingFiles) {
  const auto dir = oracle::temp_dir("cifar_short");
  auto b = fixture();
  b.resize(kCifarRecord + 100);
  write_bytes(dir / "s.bin", b);
  EXPECT_NE(message_of([&] { load_cifar10_file(dir / "s.bin", Split::Train); }).find("s.bin"), std::string::npos);
  write_bytes(dir / "e.bin", {});
  EXPECT_THROW(load_cifar10_file(dir / "e.bin", Split::Train), IngestionError);
  EXPECT_THROW(load_cifar10_file(dir / "none.bin", Split::Train), IngestionError);
  EXPECT_THROW(load_cifar10(dir), IngestionError);
}

TEST(Normalization, TrainMomentsBecomeZeroAndOne) {
  Dataset ds = synthetic(4, 25, 1);
  const NormalizationStats st = fit_normalization(ds);
  const Dataset n = apply_normalization(st, ds);
  EXPECT_TRUE(n.normalized);
  for (std::size_t p : {0u, 77u, 3071u}) {
    double mean = 0, sq = 0;
    for (std::size_t i = 0; i < n.size(); ++i) mean += n.images[i * kCifarPixels + p] / 100.0;
    for (std::size_t i = 0; i < n.size(); ++i) sq += std::pow(n.images[i * kCifarPixels + p] - mean, 2) / 100.0;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq, 1.0, 1e-10);
  }
}

TEST(Normalization, ConstantDatasetMapsToZero) {
  Dataset ds;
  ds.images = Tensor({3, 3, 32, 32}, 0.25);
  ds.labels = {0, 1, 2};
  const Dataset n = apply_normalization(fit_normalization(ds), ds);
  EXPECT_EQ(max_abs(n.images), 0.0);
  EXPECT_THROW(apply_normalization(fit_normalization(ds), n), StateError);
  EXPECT_THROW(fit_normalization(n), StateError);
}

TEST(Flip, ProbabilityOneMirrorsAndIsAnInvolution) {
  oracle::Gen g(1);
  Rng rng(1);
  const Tensor x = g.tensor({2, 3, 4, 5});
  const Tensor f = augment_flip(x, rng, 1.0);
  EXPECT_EQ(f.at(1, 2, 3, 0), x.at(1, 2, 3, 4));
  EXPECT_EQ(f.at(0, 0, 1, 1), x.at(0, 0, 1, 3));
  EXPECT_EQ(augment_flip(f, rng, 1.0), x);
  EXPECT_EQ(augment_flip(x, rng, 0.0), x);
}

TEST(Flip, SeedDeterministicAndPerImage) {
  oracle::Gen g(2);
  const Tensor x = g.tensor({64, 3, 2, 2});
  Rng a(5), b(5);
  const Tensor fa = augment_flip(x, a), fb = augment_flip(x, b);
  EXPECT_EQ(fa, fb);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < 64; ++i) flipped += fa.at(i, 0, 0, 0) != x.at(i, 0, 0, 0);
  EXPECT_GT(flipped, 10u);
  EXPECT_LT(flipped, 54u);
}

TEST(Synthetic, BasisIsOrthonormal) {
  for (std::size_t i = 0; i < kSyntheticMaxClasses; i += 5)
    for (std::size_t j = 0; j < kSyntheticMaxClasses; j += 3)
      EXPECT_NEAR(dot(synthetic_basis(i), synthetic_basis(j)), i == j ? 1.0 : 0.0, 1e-12) << i << "," << j;
  EXPECT_THROW(synthetic_basis(kSyntheticMaxClasses), DomainError);
}

TEST(Synthetic, BasisSurvivesHorizontalFlip) {
  Rng rng(1);
  for (std::size_t k = 0; k < kSyntheticMaxClasses; ++k) {
    const Tensor b = synthetic_basis(k).reshaped({1, 3, kCifarSide, kCifarSide});
    EXPECT_EQ(augment_flip(b, rng, 1.0), b) << k;
  }
}

TEST(Synthetic, ProjectionProbeSeparatesWellSpacedClasses) {
  const Dataset ds = synthetic(10, 50, 3, 12.0, Split::Test);
  std::vector<Tensor> basis;
  for (std::size_t k = 0; k < 10; ++k) basis.push_back(synthetic_basis(k).reshaped({kCifarPixels}));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Tensor img({kCifarPixels},
                     std::vector<double>(ds.images.data().begin() + i * kCifarPixels,
                                         ds.images.data().begin() + (i + 1) * kCifarPixels));
    std::size_t best = 0;
    for (std::size_t k = 1; k < 10; ++k)
      if (dot(img, basis[k]) > dot(img, basis[best])) best = k;
    correct += static_cast<int>(best) == ds.labels[i];
    EXPECT_EQ(ds.labels[i], static_cast<int>(i % 10));
  }
  EXPECT_EQ(correct, ds.size());
}

TEST(Synthetic, SplitsShareCentresButNotNoise) {
  const Dataset a = synthetic(3, 10, 4), b = synthetic(3, 10, 4, 6.0, Split::Test);
  EXPECT_NE(a.images, b.images);
  EXPECT_EQ(a.images, synthetic(3, 10, 4).images);
  EXPECT_THROW(synthetic(3, 0, 4), DomainError);
  EXPECT_THROW(synthetic(0, 3, 4), DomainError);
}

TEST(BatchSampler, EachEpochCoversEveryRecordOnce) {
  BatchSampler s(10, 3, Rng(1), false);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::multiset<std::size_t> seen;
    for (int b = 0; b < 4; ++b)
      for (std::size_t i : s.next()) seen.insert(i);
    EXPECT_EQ(seen.size(), 10u);
    EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 10u);
  }
}

TEST(BatchSampler, DropLastGivesFullBatches) {
  BatchSampler s(10, 3, Rng(2));
  for (int i = 0; i < 20; ++i) EXPECT_EQ(s.next().size(), 3u);
  EXPECT_GE(s.epoch(), 6u);
  EXPECT_THROW(BatchSampler(2, 3, Rng(1)), DomainError);
}

TEST(Gather, CopiesRequestedRecords) {
  const Dataset ds = synthetic(2, 3, 5);
  const std::vector<std::size_t> idx{4, 1};
  const Batch b = gather(ds, idx);
  EXPECT_EQ(b.labels, (std::vector<int>{ds.labels[4], ds.labels[1]}));
  EXPECT_EQ(b.images.at(1, 2, 3, 4), ds.images.at(1, 2, 3, 4));
  const std::vector<std::size_t> bad{6};
  EXPECT_THROW(gather(ds, bad), DomainError);
  EXPECT_EQ(take_first(ds, 2).size(), 2u);
}
