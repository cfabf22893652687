#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace orthonet::csv {

/// Shortest text that parses back to the same double.
std::string format(double value);
/// Empty field for a missing value.
std::string format(const std::optional<double>& value);

double parse_double(std::string_view field);
std::optional<double> parse_optional(std::string_view field);
std::size_t parse_size(std::string_view field);

std::vector<std::string> split(std::string_view line, char sep = ',');

}  // namespace orthonet::csv
