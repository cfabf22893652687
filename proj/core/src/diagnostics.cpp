#include "orthonet/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "orthonet/csv.hpp"
#include "orthonet/errors.hpp"

namespace orthonet {

double column_cosine(const Tensor& w, std::size_t i, std::size_t j) {
  const std::size_t d = w.dim(0);
  double ij = 0.0, ii = 0.0, jj = 0.0;
  for (std::size_t r = 0; r < d; ++r) {
    const double a = w.at(r, i), b = w.at(r, j);
    ij += a * b;
    ii += a * a;
    jj += b * b;
  }
  if (ii == 0.0 || jj == 0.0) return 0.0;
  return std::clamp(ij / std::sqrt(ii * jj), -1.0, 1.0);
}

CorrelationReport weight_correlation(std::span<const Tensor* const> weights,
                                     std::size_t iteration) {
  CorrelationReport r;
  r.iteration = iteration;
  double total = 0.0;
  std::size_t pairs = 0;
  for (const Tensor* w : weights) {
    if (w->rank() != 2) throw DimensionError("weight_correlation expects matrices");
    const std::size_t n = w->dim(1);
    double layer_sum = 0.0;
    std::size_t layer_pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        layer_sum += column_cosine(*w, i, j);
        ++layer_pairs;
      }
    }
    r.pair_counts.push_back(layer_pairs);
    if (layer_pairs == 0) {
      r.per_layer.emplace_back(std::nullopt);
    } else {
      r.per_layer.emplace_back(layer_sum / static_cast<double>(layer_pairs));
    }
    total += layer_sum;
    pairs += layer_pairs;
  }
  if (pairs == 0) throw DomainError("weight_correlation: no layer has two or more columns");
  r.s_bar = total / static_cast<double>(pairs);
  return r;
}

// ---------------------------------------------------------------------------

RatioTrace ratio_trace(const ErrorMomentTrace& trace) {
  RatioTrace r;
  r.iteration = trace.iteration;
  r.q = trace.q;
  std::optional<std::size_t> first, last;
  for (std::size_t l = 0; l < trace.q.size(); ++l) {
    const bool conv = trace.kinds.empty() || trace.kinds[l] == ParametricKind::Conv;
    if (!conv) continue;
    if (!first) first = l;
    last = l;
  }
  auto ratio = [](double num, double den) -> std::optional<double> {
    if (!(den > 0.0)) return std::nullopt;
    return num / den;
  };
  for (std::size_t l = 0; l < trace.q.size(); ++l) {
    r.per_layer.push_back(last ? ratio(trace.q[l], trace.q[*last]) : std::nullopt);
  }
  if (first && last) r.first_to_last = ratio(trace.q[*first], trace.q[*last]);
  return r;
}

// ---------------------------------------------------------------------------

std::vector<CorrelationRow> to_rows(const CorrelationReport& report) {
  std::vector<CorrelationRow> rows;
  for (std::size_t l = 0; l < report.per_layer.size(); ++l)
    rows.push_back({report.iteration, l, report.per_layer[l], report.s_bar});
  return rows;
}

std::vector<RatioRow> to_rows(const RatioTrace& trace) {
  std::vector<RatioRow> rows;
  for (std::size_t l = 0; l < trace.q.size(); ++l)
    rows.push_back({trace.iteration, l, trace.q[l], trace.per_layer[l]});
  return rows;
}

void write_rows(std::ostream& os, std::span<const CorrelationRow> rows) {
  for (const auto& r : rows) {
    os << r.iteration << ',' << r.layer << ',' << csv::format(r.mean_cos) << ','
       << csv::format(r.s_bar) << '\n';
  }
}

void write_rows(std::ostream& os, std::span<const RatioRow> rows) {
  for (const auto& r : rows) {
    os << r.iteration << ',' << r.layer << ',' << csv::format(r.q) << ','
       << csv::format(r.ratio_to_top) << '\n';
  }
}

namespace {

template <typename Row, typename Parse>
std::vector<Row> read_csv(std::istream& is, const char* header, Parse parse) {
  std::string line;
  if (!std::getline(is, line) || line != header) {
    throw FormatError(std::string("expected CSV header '") + header + "'");
  }
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 4) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 4 fields");
    }
    rows.push_back(parse(f));
  }
  return rows;
}

}  // namespace

std::vector<CorrelationRow> read_correlation_csv(std::istream& is) {
  return read_csv<CorrelationRow>(is, kCorrelationHeader, [](const auto& f) {
    return CorrelationRow{csv::parse_size(f[0]), csv::parse_size(f[1]), csv::parse_optional(f[2]),
                          csv::parse_double(f[3])};
  });
}

std::vector<RatioRow> read_ratios_csv(std::istream& is) {
  return read_csv<RatioRow>(is, kRatiosHeader, [](const auto& f) {
    return RatioRow{csv::parse_size(f[0]), csv::parse_size(f[1]), csv::parse_double(f[2]),
                    csv::parse_optional(f[3])};
  });
}

// ---------------------------------------------------------------------------

Image render_filters(const KernelMatrix& kernel) {
  if (kernel.channels() != 3) {
    throw UnsupportedError("filter images need 3 input channels, kernel has " +
                           std::to_string(kernel.channels()));
  }
  const std::size_t m = kernel.outputs();
  const std::size_t kw = kernel.kw(), kh = kernel.kh();
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m))));
  const std::size_t rows = (m + cols - 1) / cols;

  Image img;
  img.width = cols * (kw + 1) + 1;
  img.height = rows * (kh + 1) + 1;
  img.rgb.assign(img.width * img.height * 3, 0);

  for (std::size_t o = 0; o < m; ++o) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < kh; ++y)
        for (std::size_t x = 0; x < kw; ++x) {
          const double v = kernel.weight(o, c, y, x);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
    const std::size_t ox = (o % cols) * (kw + 1) + 1;
    const std::size_t oy = (o / cols) * (kh + 1) + 1;
    for (std::size_t y = 0; y < kh; ++y) {
      for (std::size_t x = 0; x < kw; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          std::uint8_t px = 128;
          if (hi > lo) {
            const double t = (kernel.weight(o, c, y, x) - lo) / (hi - lo);
            px = static_cast<std::uint8_t>(std::lround(255.0 * t));
          }
          img.rgb[((oy + y) * img.width + (ox + x)) * 3 + c] = px;
        }
      }
    }
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.rgb.data()),
           static_cast<std::streamsize>(image.rgb.size()));
  if (!os) throw FormatError("failed writing " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::string magic;
  std::size_t maxval = 0;
  Image img;
  is >> magic >> img.width >> img.height >> maxval;
  if (!is || magic != "P6" || maxval != 255) {
    throw FormatError(path.string() + " is not an 8-bit binary PPM");
  }
  is.get();  // single whitespace after maxval
  img.rgb.resize(img.width * img.height * 3);
  is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (static_cast<std::size_t>(is.gcount()) != img.rgb.size()) {
    throw FormatError(path.string() + ": truncated pixel data");
  }
  return img;
}

void dump_filters(const KernelMatrix& kernel, const std::filesystem::path& path) {
  write_ppm(path, render_filters(kernel));
}

}  // namespace orthonet
