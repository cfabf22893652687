#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "orthonet/modulation.hpp"
#include "orthonet/netbuilder.hpp"
#include "orthonet/network.hpp"
#include "orthonet/optimizer.hpp"
#include "orthonet/regularization.hpp"

namespace orthonet {

enum class DataSource { Cifar10, Synthetic };

struct DataConfig {
  DataSource source = DataSource::Synthetic;
  std::filesystem::path dir;       // CIFAR-10 binary batches
  std::size_t train_subset = 0;    // 0 = everything
  std::size_t test_subset = 0;
  std::size_t synthetic_classes = 10;
  std::size_t synthetic_per_class = 100;
  std::size_t synthetic_test_per_class = 20;
  double synthetic_distance = 6.0;
  std::uint64_t synthetic_seed = 7;  // fixed across run seeds so only init and batch order vary
  bool augment_flip = true;
};

/// lr(it) = base / drop_factor^(number of drop iterations <= it), it counted from 0.
struct LrSchedule {
  double base = 0.1;
  double drop_factor = 10.0;
  std::vector<std::size_t> drop_iters{32000, 48000};

  double at(std::size_t iteration) const;
};

struct TrainConfig {
  NetworkSpec network;
  InitConfig init;
  RegConfig reg;
  ModulationPolicy modulation;
  std::optional<std::size_t> modulation_active_iters;  // unset: 4% of iterations
  OptimizerConfig optimizer;
  LrSchedule lr;
  std::size_t iterations = 64000;
  std::size_t batch_size = 128;
  std::uint64_t seed = 1;
  DataConfig data;
  std::size_t eval_interval = 1000;  // 0 = only at the end
  std::size_t eval_batch = 500;
  std::size_t diag_interval = 50;
  std::filesystem::path out = "runs";
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;

  /// Throws ConfigError on the first violated constraint.
  void validate() const;

  /// Policy with active_iters resolved.
  ModulationPolicy modulation_policy() const;

  /// Every key in canonical order, one `key = value` per line.
  std::string to_text() const;

  /// FNV-1a 64 of the canonical text without `seed` and `out`.
  std::uint64_t hash() const;

  /// <out>/run_<hash hex>_s<seed>
  std::filesystem::path run_dir() const;
};

/// Parses `key = value` lines on top of the defaults. '#' starts a comment.
/// Unknown or repeated keys and malformed values are ConfigErrors that name
/// the line.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);

/// Applies a single `key = value` assignment.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace orthonet
