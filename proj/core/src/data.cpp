#include "orthonet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "orthonet/errors.hpp"

namespace orthonet {

namespace fs = std::filesystem;

Dataset load_cifar10_file(const fs::path& file, Split split, std::size_t limit) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IngestionError(file.string() + ": cannot open file (offset 0)");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.empty()) throw IngestionError(file.string() + ": empty file (offset 0)");
  const std::size_t whole = bytes.size() / kCifarRecord;
  if (bytes.size() % kCifarRecord != 0 && (limit == 0 || limit > whole)) {
    throw IngestionError(file.string() + ": short record " + std::to_string(whole) +
                         " at offset " + std::to_string(whole * kCifarRecord) + " (" +
                         std::to_string(bytes.size() - whole * kCifarRecord) + " of " +
                         std::to_string(kCifarRecord) + " bytes)");
  }
  const std::size_t n = limit == 0 ? whole : std::min(limit, whole);

  Dataset ds;
  ds.split = split;
  ds.images = Tensor({n, 3, kCifarSide, kCifarSide});
  ds.labels.resize(n);
  auto px = ds.images.data();
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t off = r * kCifarRecord;
    const int label = bytes[off];
    if (label >= kCifarClasses) {
      throw IngestionError(file.string() + ": record " + std::to_string(r) + " at offset " +
                           std::to_string(off) + " has label " + std::to_string(label));
    }
    ds.labels[r] = label;
    for (std::size_t k = 0; k < kCifarPixels; ++k)
      px[r * kCifarPixels + k] = static_cast<double>(bytes[off + 1 + k]) / 255.0;
  }
  return ds;
}

namespace {

Dataset concat(std::vector<Dataset>& parts, Split split) {
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  Dataset out;
  out.split = split;
  out.images = Tensor({n, 3, kCifarSide, kCifarSide});
  out.labels.reserve(n);
  auto dst = out.images.data();
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.images.data().begin(), p.images.data().end(), dst.begin() + static_cast<std::ptrdiff_t>(at));
    at += p.images.size();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

}  // namespace

CifarSplits load_cifar10(const fs::path& dir, std::size_t train_limit, std::size_t test_limit) {
  std::vector<Dataset> parts;
  std::size_t have = 0;
  for (int b = 1; b <= 5; ++b) {
    if (train_limit != 0 && have >= train_limit) break;
    const std::size_t want = train_limit == 0 ? 0 : train_limit - have;
    parts.push_back(load_cifar10_file(dir / ("data_batch_" + std::to_string(b) + ".bin"),
                                      Split::Train, want));
    have += parts.back().size();
  }
  CifarSplits out;
  out.train = concat(parts, Split::Train);
  out.test = load_cifar10_file(dir / "test_batch.bin", Split::Test, test_limit);
  return out;
}

void write_cifar10_file(const fs::path& file, const Dataset& ds) {
  if (ds.images.size() != ds.size() * kCifarPixels)
    throw DimensionError("write_cifar10_file: images must be [N, 3, 32, 32]");
  std::vector<unsigned char> bytes(ds.size() * kCifarRecord);
  auto px = ds.images.data();
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const int label = ds.labels[r];
    if (label < 0 || label > 255) throw DomainError("label does not fit in a byte");
    bytes[r * kCifarRecord] = static_cast<unsigned char>(label);
    for (std::size_t k = 0; k < kCifarPixels; ++k) {
      const double v = std::clamp(px[r * kCifarPixels + k] * 255.0, 0.0, 255.0);
      bytes[r * kCifarRecord + 1 + k] = static_cast<unsigned char>(std::lround(v));
    }
  }
  std::ofstream os(file, std::ios::binary);
  if (!os) throw IngestionError(file.string() + ": cannot open for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IngestionError(file.string() + ": write failed");
}

// ---------------------------------------------------------------------------

NormalizationStats fit_normalization(const Dataset& train) {
  if (train.normalized) throw StateError("fit_normalization: dataset is already normalized");
  const std::size_t n = train.size();
  if (n == 0) throw DomainError("fit_normalization: empty dataset");
  const std::size_t p = train.images.size() / n;
  Shape per_image(train.images.shape().begin() + 1, train.images.shape().end());
  NormalizationStats s{Tensor(per_image), Tensor(per_image)};
  auto x = train.images.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < p; ++k) s.mean[k] += x[i * p + k];
  for (std::size_t k = 0; k < p; ++k) s.mean[k] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < p; ++k) {
      const double d = x[i * p + k] - s.mean[k];
      s.std[k] += d * d;
    }
  }
  for (std::size_t k = 0; k < p; ++k)
    s.std[k] = std::max(std::sqrt(s.std[k] / static_cast<double>(n)), kStdFloor);
  return s;
}

Dataset apply_normalization(const NormalizationStats& stats, const Dataset& ds) {
  if (ds.normalized) throw StateError("apply_normalization: dataset is already normalized");
  const std::size_t p = stats.mean.size();
  if (ds.size() != 0 && ds.images.size() != ds.size() * p)
    throw DimensionError("apply_normalization: image size does not match the statistics");
  Dataset out = ds;
  auto x = out.images.data();
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t k = 0; k < p; ++k) x[i * p + k] = (x[i * p + k] - stats.mean[k]) / stats.std[k];
  out.normalized = true;
  return out;
}

Tensor augment_flip(const Tensor& batch, Rng& rng, double p) {
  if (batch.rank() != 4) throw DimensionError("augment_flip expects [N, C, H, W], got " + shape_str(batch.shape()));
  Tensor out = batch;
  const std::size_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  for (std::size_t i = 0; i < n; ++i) {
    if (!rng.bernoulli(p)) continue;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(i, ch, y, x) = batch.at(i, ch, y, w - 1 - x);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Four mutually orthogonal +-1 Walsh sequences over 32 samples, each symmetric
// under t -> 31 - t so a horizontal flip maps every class centre to itself.
// Kind k >= 1 is (-1)^(bit k-1 of t xor bit k of t).
double walsh(std::size_t kind, std::size_t t) {
  if (kind == 0) return 1.0;
  return (((t >> (kind - 1)) ^ (t >> kind)) & 1u) ? -1.0 : 1.0;
}

}  // namespace

Tensor synthetic_basis(std::size_t k) {
  if (k >= kSyntheticMaxClasses) throw DomainError("synthetic basis index out of range");
  const std::size_t channel = k % 3;
  const std::size_t pattern = k / 3;
  const std::size_t row_kind = pattern / 4, col_kind = pattern % 4;
  Tensor b({3, kCifarSide, kCifarSide});
  const double norm = 1.0 / static_cast<double>(kCifarSide);
  for (std::size_t y = 0; y < kCifarSide; ++y)
    for (std::size_t x = 0; x < kCifarSide; ++x)
      b[(channel * kCifarSide + y) * kCifarSide + x] = norm * walsh(row_kind, y) * walsh(col_kind, x);
  return b;
}

Dataset synthetic(std::size_t classes, std::size_t per_class, std::uint64_t seed, double distance,
                  Split split) {
  if (classes == 0 || per_class == 0) throw DomainError("synthetic: empty dataset requested");
  if (classes > kSyntheticMaxClasses)
    throw DomainError("synthetic: at most " + std::to_string(kSyntheticMaxClasses) + " classes");
  if (!(distance >= 0.0)) throw DomainError("synthetic: distance must be >= 0");

  std::vector<Tensor> centres;
  for (std::size_t k = 0; k < classes; ++k) centres.push_back(scale(synthetic_basis(k), distance / std::sqrt(2.0)));

  Rng rng = Rng(seed).derive(split == Split::Train ? 1 : 2);
  const std::size_t n = classes * per_class;
  Dataset ds;
  ds.split = split;
  ds.images = Tensor({n, 3, kCifarSide, kCifarSide});
  ds.labels.resize(n);
  auto x = ds.images.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    ds.labels[i] = static_cast<int>(k);
    for (std::size_t j = 0; j < kCifarPixels; ++j) x[i * kCifarPixels + j] = centres[k][j] + rng.normal();
  }
  return ds;
}

// ---------------------------------------------------------------------------

Dataset take_first(const Dataset& ds, std::size_t count) {
  if (count >= ds.size()) return ds;
  Dataset out;
  out.split = ds.split;
  out.normalized = ds.normalized;
  Shape shape = ds.images.shape();
  const std::size_t per = ds.images.size() / ds.size();
  shape[0] = count;
  out.images = Tensor(shape, std::vector<double>(ds.images.data().begin(),
                                                 ds.images.data().begin() + static_cast<std::ptrdiff_t>(count * per)));
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(count));
  return out;
}

Batch gather(const Dataset& ds, std::span<const std::size_t> indices) {
  Batch b;
  if (ds.size() == 0) throw DomainError("gather from an empty dataset");
  const std::size_t per = ds.images.size() / ds.size();
  Shape shape = ds.images.shape();
  shape[0] = indices.size();
  b.images = Tensor(shape);
  b.labels.reserve(indices.size());
  auto src = ds.images.data();
  auto dst = b.images.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t r = indices[i];
    if (r >= ds.size()) throw DomainError("gather: index " + std::to_string(r) + " out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * per), per,
                dst.begin() + static_cast<std::ptrdiff_t>(i * per));
    b.labels.push_back(ds.labels[r]);
  }
  return b;
}

BatchSampler::BatchSampler(std::size_t n, std::size_t batch, Rng rng, bool drop_last)
    : n_(n), batch_(batch), rng_(std::move(rng)), drop_last_(drop_last) {
  if (batch_ == 0) throw DomainError("batch size must be >= 1");
  if (n_ == 0) throw DomainError("cannot sample batches from an empty dataset");
  if (drop_last_ && batch_ > n_)
    throw DomainError("batch size " + std::to_string(batch_) + " exceeds dataset size " +
                      std::to_string(n_));
  reshuffle();
}

void BatchSampler::reshuffle() {
  order_ = rng_.permutation(n_);
  pos_ = 0;
}

std::vector<std::size_t> BatchSampler::next() {
  const bool exhausted = drop_last_ ? pos_ + batch_ > n_ : pos_ >= n_;
  if (exhausted) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t end = std::min(pos_ + batch_, n_);
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                               order_.begin() + static_cast<std::ptrdiff_t>(end));
  pos_ = end;
  return out;
}

}  // namespace orthonet
