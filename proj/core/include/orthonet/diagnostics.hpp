#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "orthonet/kernel_matrix.hpp"
#include "orthonet/modulation.hpp"
#include "orthonet/tensor.hpp"

namespace orthonet {

// ---------------------------------------------------------------------------
// Inter-filter correlation

struct CorrelationReport {
  std::size_t iteration = 0;
  std::vector<std::optional<double>> per_layer;  // mean signed cosine; empty for < 2 columns
  std::vector<std::size_t> pair_counts;
  double s_bar = 0.0;  // sum of all cosines / total pair count
};

/// Cosine between two columns; 0 if either column is zero.
double column_cosine(const Tensor& w, std::size_t i, std::size_t j);

/// Mean signed cosine over distinct unordered column pairs, pooled across
/// layers. Each entry of `weights` is an f_in x f_out matrix. Throws
/// DomainError when no layer has two columns.
CorrelationReport weight_correlation(std::span<const Tensor* const> weights,
                                     std::size_t iteration = 0);

// ---------------------------------------------------------------------------
// Backward moment ratios

struct RatioTrace {
  std::size_t iteration = 0;
  std::optional<double> first_to_last;  // q(first conv) / q(last conv)
  std::vector<std::optional<double>> per_layer;  // q^l / q(last conv)
  std::vector<double> q;
};

RatioTrace ratio_trace(const ErrorMomentTrace& trace);

// ---------------------------------------------------------------------------
// CSV files: one row per layer per sample point.

inline constexpr const char* kCorrelationHeader = "iteration,layer,mean_cos,s_bar";
inline constexpr const char* kRatiosHeader = "iteration,layer,q,ratio_to_top";

struct CorrelationRow {
  std::size_t iteration = 0;
  std::size_t layer = 0;
  std::optional<double> mean_cos;
  double s_bar = 0.0;
  bool operator==(const CorrelationRow&) const = default;
};

struct RatioRow {
  std::size_t iteration = 0;
  std::size_t layer = 0;
  double q = 0.0;
  std::optional<double> ratio_to_top;
  bool operator==(const RatioRow&) const = default;
};

std::vector<CorrelationRow> to_rows(const CorrelationReport& report);
std::vector<RatioRow> to_rows(const RatioTrace& trace);

void write_rows(std::ostream& os, std::span<const CorrelationRow> rows);
void write_rows(std::ostream& os, std::span<const RatioRow> rows);

/// Both readers expect the header line first.
std::vector<CorrelationRow> read_correlation_csv(std::istream& is);
std::vector<RatioRow> read_ratios_csv(std::istream& is);

// ---------------------------------------------------------------------------
// Filter images

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
  bool operator==(const Image&) const = default;
};

/// Grid of ceil(sqrt(M)) columns, one kW x kH tile per output channel with
/// 1-pixel black separators. Each tile is min-max normalized to [0, 255] over
/// its own kW*kH*3 values; a constant tile maps to 128.
/// Throws UnsupportedError unless the kernel has exactly 3 input channels.
Image render_filters(const KernelMatrix& kernel);

void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

void dump_filters(const KernelMatrix& kernel, const std::filesystem::path& path);

}  // namespace orthonet
