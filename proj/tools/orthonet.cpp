// orthonet command-line front end.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 unreadable input
// (dataset, checkpoint, run files), 3 diverged run, 4 a numerical check failed.

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>

#include "orthonet/checkpoint.hpp"
#include "orthonet/config.hpp"
#include "orthonet/diagnostics.hpp"
#include "orthonet/errors.hpp"
#include "orthonet/gradcheck.hpp"
#include "orthonet/jacobian_lab.hpp"
#include "orthonet/trainer.hpp"

namespace fs = std::filesystem;
using namespace orthonet;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIngestion = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitCheckFailed = 4;

TrainConfig load_with_overrides(const std::string& path, const std::optional<std::uint64_t>& seed,
                                const std::optional<std::string>& out) {
  TrainConfig c = load_config(path);
  if (seed) c.seed = *seed;
  if (out) c.out = *out;
  c.validate();
  return c;
}

int cmd_train(const std::string& config_path, const std::optional<std::uint64_t>& seed,
              const std::optional<std::string>& out) {
  const TrainConfig c = load_with_overrides(config_path, seed, out);
  TrainOptions opt;
  opt.log = &std::cout;
  const TrainResult r = train(c, opt);
  std::cout << "run_dir " << r.run_dir.string() << "\n"
            << "iterations " << r.iterations_run << "\n"
            << "final_loss " << r.final_loss << "\n"
            << "train_acc " << r.final_train_acc << "\n"
            << "test_acc " << r.final_test_acc << "\n";
  if (r.diverged) {
    std::cout << "diverged " << r.divergence_reason << "\n";
    return kExitDiverged;
  }
  return 0;
}

int cmd_gradcheck(const std::string& layer, std::size_t trials, std::uint64_t seed) {
  std::vector<GradTarget> targets;
  if (layer == "all") {
    targets = all_grad_targets();
  } else {
    targets.push_back(parse_grad_target(layer));
  }
  bool ok = true;
  for (GradTarget t : targets) {
    const GradCheckResult r = gradcheck(t, trials, seed);
    std::cout << to_string(t) << " trials=" << r.trials << " max_rel_error=" << r.max_rel_error
              << " " << (r.passed() ? "PASS" : "FAIL") << "\n";
    ok = ok && r.passed();
  }
  return ok ? 0 : kExitCheckFailed;
}

int cmd_jacobian(std::size_t m, double gamma, double eps, std::size_t trials, std::uint64_t seed) {
  QuasiIsometryConfig cfg;
  cfg.m = m;
  cfg.gamma = gamma;
  cfg.eps = eps;
  cfg.trials = trials;
  cfg.seed = seed;
  write_quasi_isometry_csv(std::cout, verify_quasi_isometry(cfg));
  return 0;
}

int cmd_diagnose(const fs::path& run) {
  const auto tensors = load_checkpoint(run / "checkpoint.bin");
  std::vector<Tensor> convs;
  for (const auto& t : tensors)
    if (t.name.ends_with(".weight") && t.value.rank() == 4)
      convs.push_back(KernelMatrix::from_tensor(t.value).matrix());
  std::vector<const Tensor*> ptrs;
  for (const auto& w : convs) ptrs.push_back(&w);
  const CorrelationReport corr = weight_correlation(ptrs);
  std::cout << "conv_layers " << convs.size() << "\n"
            << "s_bar " << corr.s_bar << "\n";

  std::ifstream is(run / "ratios.csv");
  if (!is) throw IngestionError((run / "ratios.csv").string() + ": cannot open (offset 0)");
  const auto rows = read_ratios_csv(is);
  if (rows.empty()) return 0;
  // Layer 0 is the first conv; the reference layer of ratio_to_top is the last conv.
  std::vector<std::pair<std::size_t, double>> first_to_last;
  for (const auto& r : rows)
    if (r.layer == 0 && r.ratio_to_top) first_to_last.emplace_back(r.iteration, *r.ratio_to_top);
  std::cout << "ratio_samples " << first_to_last.size() << "\n";
  if (!first_to_last.empty()) {
    const std::size_t tail = std::max<std::size_t>(1, first_to_last.size() / 4);
    double log_sum = 0.0;
    for (std::size_t i = first_to_last.size() - tail; i < first_to_last.size(); ++i)
      log_sum += std::log(first_to_last[i].second);
    std::cout << "final_first_to_last " << first_to_last.back().second << " (iteration "
              << first_to_last.back().first << ")\n"
              << "tail_geomean_first_to_last " << std::exp(log_sum / static_cast<double>(tail))
              << " (last " << tail << " samples)\n";
  }
  return 0;
}

int cmd_compare(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                const std::optional<std::string>& out) {
  const TrainConfig c = load_with_overrides(config_path, seed, out);
  TrainOptions opt;
  opt.log = &std::cerr;
  const auto rows = compare_optimizers(c, prepare_data(c), opt);
  write_comparison_csv(std::cout, rows);
  return 0;
}

int cmd_dump_filters(const fs::path& checkpoint, const fs::path& out) {
  dump_filters(first_conv_kernel(load_checkpoint(checkpoint)), out);
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Orthonormality-regularized plain CNN training and diagnostics"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;

  auto* train_cmd = app.add_subcommand("train", "Train a network from a config file");
  train_cmd->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", seed, "Override the config seed");
  train_cmd->add_option("--out", out, "Override the output directory");

  std::string layer = "all";
  std::size_t trials = 20;
  std::uint64_t check_seed = 1;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad_cmd->add_option("--layer", layer, "conv|bn|relu|fc|softmax|orthoreg|l2reg|all");
  grad_cmd->add_option("--trials", trials, "Random instances per layer");
  grad_cmd->add_option("--seed", check_seed, "Seed");

  std::size_t m = 32;
  double gamma = 1.0, eps = 0.0;
  std::size_t jac_trials = 10;
  std::uint64_t jac_seed = 1;
  auto* jac_cmd = app.add_subcommand("jacobian", "BN Jacobian spectrum experiment (CSV to stdout)");
  jac_cmd->add_option("--m", m, "Batch size")->check(CLI::Range(2, 4096));
  jac_cmd->add_option("--gamma", gamma, "BN scale");
  jac_cmd->add_option("--eps", eps, "BN epsilon")->check(CLI::NonNegativeNumber);
  jac_cmd->add_option("--trials", jac_trials, "Random batches");
  jac_cmd->add_option("--seed", jac_seed, "Seed");

  std::string run_dir;
  auto* diag_cmd = app.add_subcommand("diagnose", "Summarize s-bar and moment ratios of a run");
  diag_cmd->add_option("--run", run_dir, "Run directory")->required();

  auto* cmp_cmd = app.add_subcommand("compare-optimizers", "Run every optimizer on one config (CSV to stdout)");
  cmp_cmd->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("--seed", seed, "Override the config seed");
  cmp_cmd->add_option("--out", out, "Override the output directory");

  std::string checkpoint, ppm;
  auto* dump_cmd = app.add_subcommand("dump-filters", "Write first-layer filters as a PPM image");
  dump_cmd->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required();
  dump_cmd->add_option("--out", ppm, "Output .ppm")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, seed, out);
    if (*grad_cmd) return cmd_gradcheck(layer, trials, check_seed);
    if (*jac_cmd) return cmd_jacobian(m, gamma, eps, jac_trials, jac_seed);
    if (*diag_cmd) return cmd_diagnose(run_dir);
    if (*cmp_cmd) return cmd_compare(config_path, seed, out);
    if (*dump_cmd) return cmd_dump_filters(checkpoint, ppm);
  } catch (const IngestionError& e) {
    std::cerr << "ingestion error: " << e.what() << "\n";
    return kExitIngestion;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitIngestion;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
