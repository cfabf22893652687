#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "orthonet/rng.hpp"
#include "orthonet/tensor.hpp"

namespace orthonet {

enum class Split { Train, Test };

struct Dataset {
  Tensor images;            // [N, 3, 32, 32]
  std::vector<int> labels;  // length N
  Split split = Split::Train;
  bool normalized = false;

  std::size_t size() const { return labels.size(); }
};

// ---------------------------------------------------------------------------
// CIFAR-10 binary batches: 3073-byte records, one label byte then the R, G
// and B planes (1024 bytes each, row-major).

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecord = 1 + kCifarPixels;
inline constexpr int kCifarClasses = 10;

/// Reads up to `limit` records (0 = all). Pixels map to byte / 255.
/// Throws IngestionError naming the file and byte offset of the problem.
Dataset load_cifar10_file(const std::filesystem::path& file, Split split, std::size_t limit = 0);

struct CifarSplits {
  Dataset train;
  Dataset test;
};

/// data_batch_1..5.bin and test_batch.bin from `dir`, record order preserved.
/// `train_limit` keeps only the first records of the training batches.
CifarSplits load_cifar10(const std::filesystem::path& dir, std::size_t train_limit = 0,
                         std::size_t test_limit = 0);

/// Inverse of load_cifar10_file; pixel values are rounded to the nearest byte.
void write_cifar10_file(const std::filesystem::path& file, const Dataset& ds);

// ---------------------------------------------------------------------------

inline constexpr double kStdFloor = 1e-8;

struct NormalizationStats {
  Tensor mean;  // per pixel, [3, 32, 32]
  Tensor std;   // per pixel, floored at kStdFloor
};

/// Per-pixel mean and population standard deviation of a training split.
NormalizationStats fit_normalization(const Dataset& train);

/// (x - mean) / std. Throws StateError when `ds` is already normalized.
Dataset apply_normalization(const NormalizationStats& stats, const Dataset& ds);

/// Mirrors each image left-right with probability p, one draw per image.
Tensor augment_flip(const Tensor& batch, Rng& rng, double p = 0.5);

// ---------------------------------------------------------------------------

/// Largest class count the synthetic generator supports.
inline constexpr std::size_t kSyntheticMaxClasses = 48;

/// Gaussian class blobs on 3x32x32 images. Class k is centred at
/// (distance / sqrt(2)) * b_k where the b_k are orthonormal, left-right
/// symmetric Walsh-pattern images (flip augmentation keeps labels valid), so any two centres are `distance` apart; pixel noise is N(0, 1).
/// Samples are interleaved by class (label of sample i is i % classes). The
/// train and test splits share centres and draw independent noise.
Dataset synthetic(std::size_t classes, std::size_t per_class, std::uint64_t seed,
                  double distance = 6.0, Split split = Split::Train);

/// The k-th orthonormal basis image used by `synthetic`.
Tensor synthetic_basis(std::size_t k);

// ---------------------------------------------------------------------------

Dataset take_first(const Dataset& ds, std::size_t count);

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

Batch gather(const Dataset& ds, std::span<const std::size_t> indices);

/// Seed-deterministic shuffled batches. Each epoch is a fresh permutation. With
/// drop_last the trailing partial batch of an epoch is skipped; otherwise it is
/// returned on its own, so every record appears exactly once per epoch.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch, Rng rng, bool drop_last = true);

  std::vector<std::size_t> next();
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  std::size_t n_, batch_;
  Rng rng_;
  bool drop_last_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace orthonet
