#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "orthonet/config.hpp"
#include "orthonet/data.hpp"
#include "orthonet/diagnostics.hpp"
#include "orthonet/modulation.hpp"
#include "orthonet/network.hpp"

namespace orthonet {

inline constexpr const char* kMetricsHeader = "iteration,lr,loss,train_acc,test_acc";

/// One row per iteration. train_acc is the accuracy on that iteration's
/// mini-batch; test_acc is present only at evaluation points.
struct MetricsRow {
  std::size_t iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> test_acc;
  bool operator==(const MetricsRow&) const = default;
};

void write_rows(std::ostream& os, std::span<const MetricsRow> rows);
std::vector<MetricsRow> read_metrics_csv(std::istream& is);

struct TrainData {
  Dataset train;  // normalized
  Dataset test;   // normalized with the training statistics
};

/// Loads (or generates) both splits and applies train-split normalization.
/// Throws IngestionError for unreadable CIFAR-10 files.
TrainData prepare_data(const TrainConfig& config);

struct IterationInfo {
  std::size_t iteration = 0;  // 0-based
  double lr = 0.0;
  double loss = 0.0;
  const ErrorMomentTrace* trace = nullptr;
  const Network* network = nullptr;
};

struct TrainOptions {
  bool write_files = true;
  std::ostream* log = nullptr;  // progress lines at evaluation points
  std::function<void(const IterationInfo&)> on_iteration;
};

struct TrainResult {
  std::filesystem::path run_dir;  // empty when files are not written
  std::size_t iterations_run = 0;
  bool diverged = false;
  std::string divergence_reason;
  double final_loss = 0.0;
  double final_train_acc = 0.0;  // full training split, inference mode
  double final_test_acc = 0.0;
  std::vector<MetricsRow> metrics;
  std::vector<CorrelationReport> correlations;  // every diag.interval iterations and at the end
  std::vector<RatioTrace> ratios;
  std::vector<NamedTensor> final_state;
};

/// forward, loss, backward with the modulation hook, regularizer gradients,
/// optimizer step; lr drops per schedule; diagnostics sampled every
/// diag.interval iterations. A non-finite loss, or a loss above 10x the first
/// iteration's for 200 consecutive iterations, stops the run as diverged.
TrainResult train(const TrainConfig& config, const TrainData& data, const TrainOptions& options = {});
TrainResult train(const TrainConfig& config, const TrainOptions& options = {});

/// Top-1 accuracy with batch normalization in inference mode.
double evaluate(Network& network, const Dataset& ds, std::size_t batch_size = 500);

/// Network exactly as train() would initialize it for this config.
Network make_network(const TrainConfig& config);

// ---------------------------------------------------------------------------

inline constexpr const char* kComparisonHeader = "method,train_acc,test_acc,final_loss,diverged";

struct ComparisonRow {
  std::string method;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double final_loss = 0.0;
  bool diverged = false;
};

/// Base learning rate used for `kind` in the optimizer comparison: the
/// configured rate for the momentum methods, the usual library defaults for the
/// adaptive ones (adagrad 0.01, adam 0.001, rmsprop 0.001; adadelta ignores it).
double comparison_lr(OptimizerKind kind, double configured);

/// Six optimizers with msra init and L2, then "ours": SGD with orthonormal
/// init and orthonormal regularization. Writes the CSV into config.out when
/// options.write_files is set.
std::vector<ComparisonRow> compare_optimizers(const TrainConfig& config, const TrainData& data,
                                              const TrainOptions& options = {});
void write_comparison_csv(std::ostream& os, std::span<const ComparisonRow> rows);

}  // namespace orthonet
