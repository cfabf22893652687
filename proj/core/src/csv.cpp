#include "orthonet/csv.hpp"

#include <charconv>
#include <cmath>

#include "orthonet/errors.hpp"

namespace orthonet::csv {

std::string format(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string format(const std::optional<double>& value) {
  return value ? format(*value) : std::string();
}

double parse_double(std::string_view field) {
  if (field == "nan") return std::nan("");
  if (field == "inf") return INFINITY;
  if (field == "-inf") return -INFINITY;
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw FormatError("not a number: '" + std::string(field) + "'");
  }
  return v;
}

std::optional<double> parse_optional(std::string_view field) {
  if (field.empty()) return std::nullopt;
  return parse_double(field);
}

std::size_t parse_size(std::string_view field) {
  std::size_t v = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw FormatError("not a non-negative integer: '" + std::string(field) + "'");
  }
  return v;
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace orthonet::csv
