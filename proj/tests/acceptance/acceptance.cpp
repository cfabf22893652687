// Acceptance suite: one [PASS]/[FAIL]/[BLOCKED] line per criterion.
//
// Exit status: 0 when every requested criterion passed, 1 when any failed,
// 77 when nothing failed but at least one criterion could not run (the
// CIFAR-10 criteria need the binary batches in $CIFAR10_DIR).

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "oracles.hpp"
#include "orthonet/checkpoint.hpp"
#include "orthonet/data.hpp"
#include "orthonet/diagnostics.hpp"
#include "orthonet/gradcheck.hpp"
#include "orthonet/jacobian_lab.hpp"
#include "orthonet/layers.hpp"
#include "orthonet/netbuilder.hpp"
#include "orthonet/network.hpp"
#include "orthonet/optimizer.hpp"
#include "orthonet/trainer.hpp"

namespace fs = std::filesystem;
using namespace orthonet;

namespace {

enum class Status { Pass, Fail, Blocked };

struct Outcome {
  Status status = Status::Fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

std::string num(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t failures = 0, instances = 0;
  for (GradTarget t : all_grad_targets()) {
    const GradCheckResult r = gradcheck(t, 20, 2024, 1e-4);
    worst = std::max(worst, r.max_rel_error);
    failures += r.failures;
    instances += r.trials;
  }
  const double secs = seconds_since(t0);
  return verdict(failures == 0 && secs < 120.0,
                 std::to_string(instances) + " instances over 7 targets, max rel error " + num(worst) + ", " +
                     num(secs) + " s");
}

Outcome criterion_2() {
  const LayerGraph g = build_plain(7, {16, 32, 64}, 10);
  Rng rng(1);
  Network net(g, {InitKind::Ortho}, rng);
  double worst = 0.0;
  for (const Tensor* w : net.conv_matrices())
    worst = std::max(worst, orthonormality_error(*w, partition_groups(w->dim(0), w->dim(1))));
  const std::size_t flags = validate(g).groupwise_count();
  return verdict(worst < 1e-10 && flags == 0 && net.conv_matrices().size() == 43,
                 std::to_string(net.conv_matrices().size()) + " convs, max |W^T W - I| " + num(worst) +
                     ", group-wise flags " + std::to_string(flags));
}

Outcome criterion_3() {
  Rng rng(3);
  oracle::Gen gen(3);
  double worst = 0.0;
  for (auto [f_in, f_out] : std::vector<std::pair<std::size_t, std::size_t>>{{144, 16}, {288, 32}, {576, 64}, {64, 64}}) {
    const Tensor w = ortho_matrix(f_in, f_out, rng);
    for (int i = 0; i < 1000; ++i) {
      const Tensor d = gen.tensor({f_out, 1});
      const double nd = frobenius_norm(d);
      worst = std::max(worst, std::abs(frobenius_norm(matmul(w, d)) - nd) / nd);
    }
  }
  return verdict(worst < 1e-10, "4 matrices x 1000 vectors, max relative norm change " + num(worst));
}

Tensor fd_bn_jacobian(const std::vector<double>& x) {
  const std::size_t m = x.size();
  const double h = 1e-6;
  Tensor j({m, m});
  for (std::size_t c = 0; c < m; ++c) {
    auto eval = [&](double dx) {
      BatchNormState bn = make_batch_norm(1, 0.0);
      Tensor in({m, 1}, x);
      in[c] += dx;
      return bn_forward(bn, in, true);
    };
    const Tensor p = eval(h), n = eval(-h);
    for (std::size_t r = 0; r < m; ++r) j.at(r, c) = (p[r] - n[r]) / (2 * h);
  }
  return j;
}

Outcome criterion_4() {
  const auto t0 = std::chrono::steady_clock::now();
  oracle::Gen gen(4);
  double fd_err = 0.0, spec_err = 0.0, u_res = 0.0, u_eig = 0.0;
  for (std::size_t m : {8u, 32u, 128u, 256u}) {
    std::vector<double> x(m);
    for (double& v : x) v = gen.normal(0.5, 1.5);
    const BnJacobianBlock b = build_block(x, 1.0, 0.0);
    fd_err = std::max(fd_err, oracle::rel_frobenius(b.jacobian, fd_bn_jacobian(x)));

    // Target spectrum: two zeros, m - 2 copies of rho, matched after sorting.
    std::vector<double> mu = eig_sym(b.jacobian).eigenvalues;
    std::sort(mu.begin(), mu.end());
    std::vector<double> target(m, b.rho);
    target[0] = target[1] = 0.0;
    for (std::size_t k = 0; k < m; ++k) spec_err = std::max(spec_err, std::abs(mu[k] - target[k]));

    const Tensor u = build_u(b.x_hat);
    const double md = static_cast<double>(m);
    u_res = std::max(u_res, frobenius_norm(sub(matmul(u, u), scale(u, md))) / frobenius_norm(u));
    const Spectrum su = eig_sym(u);
    u_eig = std::max({u_eig, std::abs(su.eigenvalues[0] - md) / md, std::abs(su.eigenvalues[1] - md) / md});
  }
  const double secs = seconds_since(t0);
  return verdict(fd_err < 1e-5 && spec_err < 1e-8 && u_res < 1e-10 && u_eig < 1e-9 && secs < 60.0,
                 "m in {8,32,128,256}: FD rel " + num(fd_err) + ", spectrum dev " + num(spec_err) +
                     ", U residual " + num(u_res) + ", U eigen rel dev " + num(u_eig) + ", " + num(secs) + " s");
}

TrainConfig modulation_config() {
  TrainConfig c;
  c.network.n = 3;  // 20 layers
  c.network.channels = {8, 16, 32};
  c.network.num_classes = 10;
  c.data.synthetic_classes = 10;
  c.data.synthetic_per_class = 40;
  c.data.synthetic_test_per_class = 4;
  c.iterations = 100;
  c.batch_size = 16;
  c.lr.drop_iters = {};
  c.eval_interval = 0;
  c.diag_interval = 1000;
  c.init.kind = InitKind::Ortho;
  c.reg = {RegKind::Orthonormal, 1e-4};
  return c;
}

// Largest |log(q_{l+1} / q_l)| over consecutive conv layers of one trace.
double max_conv_log_ratio(const ErrorMomentTrace& t) {
  double worst = 0.0;
  std::optional<double> prev;
  for (std::size_t l = 0; l < t.size(); ++l) {
    if (t.kinds[l] != ParametricKind::Conv) continue;
    if (prev && *prev > 0.0 && t.q[l] > 0.0) worst = std::max(worst, std::abs(std::log(t.q[l] / *prev)));
    prev = t.q[l];
  }
  return worst;
}

Outcome criterion_5() {
  TrainOptions opt;
  opt.write_files = false;

  TrainConfig on = modulation_config();
  on.modulation.enabled = true;
  on.modulation.tau = 2.0;
  on.modulation_active_iters = on.iterations;
  double worst_on = 0.0;
  std::size_t modulated = 0;
  opt.on_iteration = [&](const IterationInfo& info) {
    if (!on.modulation_policy().active_at(info.trace->iteration)) return;
    ++modulated;
    worst_on = std::max(worst_on, max_conv_log_ratio(*info.trace));
  };
  train(on, opt);

  TrainConfig off = modulation_config();
  std::optional<std::size_t> first_exceed;
  double worst_off = 0.0;
  opt.on_iteration = [&](const IterationInfo& info) {
    const double r = max_conv_log_ratio(*info.trace);
    worst_off = std::max(worst_off, r);
    if (!first_exceed && r > std::log(2.0)) first_exceed = info.iteration + 1;
  };
  train(off, opt);

  const bool ok = modulated == on.iterations && worst_on <= std::log(2.0) + 1e-12 && first_exceed.has_value();
  return verdict(ok, "on: " + std::to_string(modulated) + " modulated passes, max |log ratio| " + num(worst_on) +
                         " (band " + num(std::log(2.0)) + "); off: max " + num(worst_off) +
                         (first_exceed ? ", first exceeds at iteration " + std::to_string(*first_exceed)
                                       : ", never exceeds in 100 iterations"));
}

// Each optimizer against its own scalar recurrence on f(w) = |w|^2 / 2.
double scalar_recurrence(OptimizerKind kind, double w, double lr, const OptimizerConfig& c) {
  double s1 = 0.0, s2 = 0.0;
  for (int t = 1; t <= 100; ++t) {
    const double g = w;
    switch (kind) {
      case OptimizerKind::Sgd:
        s1 = c.momentum * s1 - lr * g;
        w += s1;
        break;
      case OptimizerKind::Nesterov: {
        const double v0 = s1;
        s1 = c.momentum * s1 - lr * g;
        w += -c.momentum * v0 + (1 + c.momentum) * s1;
        break;
      }
      case OptimizerKind::AdaGrad:
        s1 += g * g;
        w -= lr * g / (std::sqrt(s1) + c.eps);
        break;
      case OptimizerKind::AdaDelta: {
        s1 = c.adadelta_rho * s1 + (1 - c.adadelta_rho) * g * g;
        const double d = -std::sqrt(s2 + c.adadelta_eps) / std::sqrt(s1 + c.adadelta_eps) * g;
        s2 = c.adadelta_rho * s2 + (1 - c.adadelta_rho) * d * d;
        w += d;
        break;
      }
      case OptimizerKind::Adam:
        s1 = c.beta1 * s1 + (1 - c.beta1) * g;
        s2 = c.beta2 * s2 + (1 - c.beta2) * g * g;
        w -= lr * (s1 / (1 - std::pow(c.beta1, t))) / (std::sqrt(s2 / (1 - std::pow(c.beta2, t))) + c.eps);
        break;
      case OptimizerKind::RmsProp:
        s1 = c.rms_decay * s1 + (1 - c.rms_decay) * g * g;
        w -= lr * g / (std::sqrt(s1) + c.eps);
        break;
    }
  }
  return w;
}

Outcome criterion_9a() {
  double worst = 0.0;
  for (OptimizerKind k : all_optimizers()) {
    OptimizerConfig cfg;
    cfg.kind = k;
    OptimizerState st(cfg);
    const double lr = 0.05;
    Tensor w = Tensor::vector({10.0, 10.0});
    Tensor* p[] = {&w};
    for (int i = 0; i < 100; ++i) {
      const Tensor g = w;
      const Tensor* gp[] = {&g};
      step(st, p, gp, lr);
    }
    const double ref = scalar_recurrence(k, 10.0, lr, cfg);
    for (std::size_t i = 0; i < 2; ++i) worst = std::max(worst, std::abs(w[i] - ref) / std::max(1.0, std::abs(ref)));
  }
  return verdict(worst < 1e-10, "6 methods, 100 steps from (10,10), max deviation " + num(worst));
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  return !sa.empty() && sa == sb;
}

Outcome criterion_10() {
  const fs::path dir = oracle::temp_dir("acceptance10");
  std::vector<std::string> failed;

  // CIFAR-10 fixture: byte-valued images survive write/read exactly.
  Dataset ds = synthetic(10, 3, 1);
  for (double& v : ds.images.data()) v = std::round(std::clamp(0.5 + 0.1 * v, 0.0, 1.0) * 255.0) / 255.0;
  write_cifar10_file(dir / "fixture.bin", ds);
  const Dataset back = load_cifar10_file(dir / "fixture.bin", Split::Train);
  if (back.images != ds.images || back.labels != ds.labels ||
      fs::file_size(dir / "fixture.bin") != ds.size() * kCifarRecord)
    failed.push_back("cifar fixture");

  // CSV: awkward doubles re-parse to identical values.
  oracle::Gen gen(10);
  std::vector<MetricsRow> rows;
  for (std::size_t i = 0; i < 200; ++i)
    rows.push_back({i, std::ldexp(gen.normal(), static_cast<int>(gen.size(0, 200)) - 100), gen.normal(),
                    gen.uniform(), i % 3 ? std::optional<double>(gen.normal() * 1e-308) : std::nullopt});
  std::stringstream ss;
  ss << kMetricsHeader << '\n';
  write_rows(ss, rows);
  if (read_metrics_csv(ss) != rows) failed.push_back("csv");

  // PPM round trip.
  Rng rng(10);
  const Image img = render_filters(ortho_init(3, 3, 3, 16, rng));
  write_ppm(dir / "f.ppm", img);
  if (read_ppm(dir / "f.ppm") != img) failed.push_back("ppm");

  // Two identical runs give byte-identical checkpoints.
  TrainConfig c = modulation_config();
  c.network.n = 1;
  c.iterations = 30;
  c.modulation.enabled = true;
  std::vector<fs::path> runs;
  for (const char* sub : {"a", "b"}) {
    c.out = dir / sub;
    runs.push_back(train(c).run_dir);
  }
  if (!same_bytes(runs[0] / "checkpoint.bin", runs[1] / "checkpoint.bin") ||
      !same_bytes(runs[0] / "metrics.csv", runs[1] / "metrics.csv"))
    failed.push_back("run determinism");

  std::string detail = "fixture, CSV, PPM and checkpoint determinism";
  for (const auto& f : failed) detail += "; failed: " + f;
  return verdict(failed.empty(), detail);
}

// ---------------------------------------------------------------------------
// CIFAR-10 criteria. They share one set of six runs.

std::optional<fs::path> cifar_dir() {
  const char* env = std::getenv("CIFAR10_DIR");
  if (!env || !*env) return std::nullopt;
  return fs::path(env);
}

TrainConfig desk_config(const fs::path& dir, bool ortho, std::uint64_t seed) {
  TrainConfig c;
  c.network.n = 4;  // 26 layers
  c.network.channels = {8, 16, 32};
  c.data.source = DataSource::Cifar10;
  c.data.dir = dir;
  c.data.train_subset = 10000;
  c.iterations = 8000;
  c.lr.base = 0.1;
  c.lr.drop_iters = {4000, 6000};
  c.eval_interval = 1000;
  c.diag_interval = 100;
  c.seed = seed;
  c.init.kind = ortho ? InitKind::Ortho : InitKind::Msra;
  c.reg = {ortho ? RegKind::Orthonormal : RegKind::L2, 1e-4};
  c.out = fs::temp_directory_path() / "orthonet_acceptance_cifar";
  return c;
}

struct DeskRuns {
  std::vector<TrainResult> ortho, l2;
};

const DeskRuns& desk_runs(const fs::path& dir) {
  static std::optional<DeskRuns> cache;
  if (!cache) {
    DeskRuns r;
    TrainOptions opt;
    opt.log = &std::cerr;
    const TrainData data = prepare_data(desk_config(dir, true, 1));
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      r.ortho.push_back(train(desk_config(dir, true, seed), data, opt));
      r.l2.push_back(train(desk_config(dir, false, seed), data, opt));
    }
    cache = std::move(r);
  }
  return *cache;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome blocked() { return {Status::Blocked, "CIFAR10_DIR is not set; the CIFAR-10 binary batches are required"}; }

Outcome criterion_6() {
  const auto dir = cifar_dir();
  if (!dir) return blocked();
  const DeskRuns& r = desk_runs(*dir);
  std::vector<double> ortho, l2;
  for (const auto& x : r.ortho) ortho.push_back(x.final_test_acc);
  for (const auto& x : r.l2) l2.push_back(x.final_test_acc);
  const double diff = 100.0 * (median(ortho) - median(l2));
  return verdict(diff >= 2.0, "median test accuracy ortho " + num(median(ortho)) + " vs msra+L2 " +
                                  num(median(l2)) + " (" + num(diff) + " pp)");
}

Outcome criterion_7() {
  const auto dir = cifar_dir();
  if (!dir) return blocked();
  const DeskRuns& r = desk_runs(*dir);
  std::vector<double> ortho, l2;
  for (const auto& x : r.ortho) ortho.push_back(x.correlations.back().s_bar);
  for (const auto& x : r.l2) l2.push_back(x.correlations.back().s_bar);
  const double ratio = median(l2) / median(ortho);
  return verdict(ratio > 1.2, "final s_bar L2 " + num(median(l2)) + " vs ortho " + num(median(ortho)) +
                                  " (ratio " + num(ratio) + ")");
}

// Geometric mean of the first-to-last ratio over samples at iteration >= 6000.
double final_phase_geomean(const TrainResult& r) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& t : r.ratios) {
    if (t.iteration < 6000 || !t.first_to_last || !(*t.first_to_last > 0.0)) continue;
    acc += std::log(*t.first_to_last);
    ++n;
  }
  return n ? std::exp(acc / static_cast<double>(n)) : std::nan("");
}

Outcome criterion_8() {
  const auto dir = cifar_dir();
  if (!dir) return blocked();
  const DeskRuns& r = desk_runs(*dir);
  std::vector<double> ortho, l2;
  for (const auto& x : r.ortho) ortho.push_back(final_phase_geomean(x));
  for (const auto& x : r.l2) l2.push_back(final_phase_geomean(x));
  const double ratio = median(ortho) / median(l2);
  return verdict(ratio >= 2.0, "final-phase first-to-last ratio ortho " + num(median(ortho)) + " vs L2 " +
                                   num(median(l2)) + " (" + num(ratio) + "x)");
}

Outcome criterion_9b() {
  const auto dir = cifar_dir();
  if (!dir) return blocked();
  TrainConfig c = desk_config(*dir, false, 1);
  TrainOptions opt;
  opt.log = &std::cerr;
  const auto rows = compare_optimizers(c, prepare_data(c), opt);
  std::map<std::string, double> acc;
  for (const auto& row : rows) acc[row.method] = row.diverged ? 0.0 : row.train_acc;
  std::ostringstream table;
  write_comparison_csv(table, rows);
  std::cerr << table.str();
  return verdict(acc["sgd"] > 0.5 && acc["ours"] > 0.5,
                 "train accuracy sgd " + num(acc["sgd"]) + ", ours " + num(acc["ours"]));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"orthonet acceptance suite"};
  std::vector<std::string> wanted{"1", "2", "3", "4", "5", "6", "7", "8", "9a", "9b", "10"};
  app.add_option("--criteria", wanted, "Comma-separated criterion ids")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::map<std::string, std::function<Outcome()>> table{
      {"1", criterion_1}, {"2", criterion_2},   {"3", criterion_3},   {"4", criterion_4},
      {"5", criterion_5}, {"6", criterion_6},   {"7", criterion_7},   {"8", criterion_8},
      {"9a", criterion_9a}, {"9b", criterion_9b}, {"10", criterion_10}};

  bool any_fail = false, any_blocked = false;
  for (const auto& id : wanted) {
    const auto it = table.find(id);
    if (it == table.end()) {
      std::cerr << "unknown criterion '" << id << "'\n";
      return 1;
    }
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::Pass ? "[PASS]" : o.status == Status::Fail ? "[FAIL]" : "[BLOCKED]";
    std::cout << tag << " criterion " << id << ": " << o.detail << std::endl;
    any_fail = any_fail || o.status == Status::Fail;
    any_blocked = any_blocked || o.status == Status::Blocked;
  }
  if (any_fail) return 1;
  return any_blocked ? 77 : 0;
}
