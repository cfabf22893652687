#include "orthonet/trainer.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "orthonet/checkpoint.hpp"
#include "orthonet/csv.hpp"
#include "orthonet/errors.hpp"
#include "orthonet/optimizer.hpp"
#include "orthonet/regularization.hpp"

namespace orthonet {

namespace fs = std::filesystem;

void write_rows(std::ostream& os, std::span<const MetricsRow> rows) {
  for (const auto& r : rows) {
    os << r.iteration << ',' << csv::format(r.lr) << ',' << csv::format(r.loss) << ','
       << csv::format(r.train_acc) << ',' << csv::format(r.test_acc) << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader)
    throw FormatError(std::string("expected CSV header '") + kMetricsHeader + "'");
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 5) throw FormatError("metrics row needs 5 fields: " + line);
    rows.push_back({csv::parse_size(f[0]), csv::parse_double(f[1]), csv::parse_double(f[2]),
                    csv::parse_double(f[3]), csv::parse_optional(f[4])});
  }
  return rows;
}

TrainData prepare_data(const TrainConfig& config) {
  const DataConfig& d = config.data;
  Dataset train, test;
  if (d.source == DataSource::Cifar10) {
    CifarSplits s = load_cifar10(d.dir, d.train_subset, d.test_subset);
    train = std::move(s.train);
    test = std::move(s.test);
  } else {
    train = synthetic(d.synthetic_classes, d.synthetic_per_class, d.synthetic_seed,
                      d.synthetic_distance, Split::Train);
    test = synthetic(d.synthetic_classes, d.synthetic_test_per_class, d.synthetic_seed,
                     d.synthetic_distance, Split::Test);
    if (d.train_subset) train = take_first(train, d.train_subset);
    if (d.test_subset) test = take_first(test, d.test_subset);
  }
  const NormalizationStats stats = fit_normalization(train);
  return {apply_normalization(stats, train), apply_normalization(stats, test)};
}

Network make_network(const TrainConfig& config) {
  Rng init_rng = Rng(config.seed).derive(1);
  return Network(build(config.network), config.init, init_rng, config.bn_eps, config.bn_momentum);
}

double evaluate(Network& network, const Dataset& ds, std::size_t batch_size) {
  if (ds.size() == 0) throw DomainError("evaluate on an empty dataset");
  if (batch_size == 0) throw DomainError("evaluation batch size must be >= 1");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t end = std::min(ds.size(), start + batch_size);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    Batch b = gather(ds, idx);
    const Tensor logits = network.forward(b.images, false);
    correct += static_cast<std::size_t>(std::llround(top1_accuracy(logits, b.labels) *
                                                     static_cast<double>(idx.size())));
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

namespace {

struct RunFiles {
  std::ofstream metrics, correlation, ratios;

  explicit RunFiles(const fs::path& dir) {
    open(metrics, dir / "metrics.csv", kMetricsHeader);
    open(correlation, dir / "correlation.csv", kCorrelationHeader);
    open(ratios, dir / "ratios.csv", kRatiosHeader);
  }
  static void open(std::ofstream& os, const fs::path& p, const char* header) {
    os.open(p);
    if (!os) throw FormatError("cannot create " + p.string());
    os << header << '\n';
  }
};

}  // namespace

TrainResult train(const TrainConfig& config, const TrainData& data, const TrainOptions& options) {
  config.validate();
  if (data.train.size() < config.batch_size)
    throw ConfigError("batch_size " + std::to_string(config.batch_size) +
                      " exceeds the training set size " + std::to_string(data.train.size()));

  TrainResult result;
  std::optional<RunFiles> files;
  if (options.write_files) {
    result.run_dir = config.run_dir();
    fs::create_directories(result.run_dir);
    std::ofstream(result.run_dir / "config.txt") << config.to_text();
    files.emplace(result.run_dir);
  }

  Rng root(config.seed);
  Network net = make_network(config);
  BatchSampler sampler(data.train.size(), config.batch_size, root.derive(2));
  Rng aug_rng = root.derive(3);
  OptimizerState opt(config.optimizer);
  BackwardModulator modulator(config.modulation_policy(), net.parametric_kinds());

  std::vector<ParamRef> params = net.parameters();
  std::vector<Tensor*> values, grads;
  for (auto& p : params) {
    values.push_back(p.value);
    grads.push_back(p.grad);
  }
  const bool regularize = config.reg.kind != RegKind::None && config.reg.lambda > 0.0;
  auto hook = [&modulator](std::size_t i, Tensor& e) { modulator.on_error(i, e); };

  double initial_loss = 0.0;
  std::size_t above = 0;

  auto sample_diagnostics = [&](std::size_t it) {
    const auto convs = net.conv_matrices();
    CorrelationReport corr = weight_correlation(convs, it);
    RatioTrace ratio = ratio_trace(modulator.trace());
    ratio.iteration = it;
    if (files) {
      write_rows(files->correlation, std::span<const CorrelationRow>(to_rows(corr)));
      write_rows(files->ratios, std::span<const RatioRow>(to_rows(ratio)));
    }
    result.correlations.push_back(std::move(corr));
    result.ratios.push_back(std::move(ratio));
  };

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const double lr = config.lr.at(it);
    const std::vector<std::size_t> idx = sampler.next();
    Batch batch = gather(data.train, idx);
    if (config.data.augment_flip) batch.images = augment_flip(batch.images, aug_rng);

    const Tensor logits = net.forward(batch.images, true);
    const SoftmaxXent sx = softmax_xent(logits, batch.labels);
    MetricsRow row{it, lr, sx.loss, top1_accuracy(logits, batch.labels), std::nullopt};
    result.iterations_run = it + 1;
    result.final_loss = sx.loss;

    if (it == 0) initial_loss = sx.loss;
    if (!std::isfinite(sx.loss)) {
      result.diverged = true;
      result.divergence_reason = "non-finite loss at iteration " + std::to_string(it);
    } else if (sx.loss > 10.0 * initial_loss) {
      if (++above >= 200) {
        result.diverged = true;
        result.divergence_reason = "loss above 10x its initial value for 200 iterations (iteration " +
                                   std::to_string(it) + ")";
      }
    } else {
      above = 0;
    }

    if (!result.diverged) {
      modulator.begin(it + 1);
      net.backward(sx.d_logits, hook);
      if (regularize) {
        for (auto& p : params) {
          if (!p.regularized) continue;
          axpy(1.0, penalty_grad(config.reg, *p.value, p.partition), *p.grad);
        }
      }
      step(opt, values, std::span<const Tensor* const>(grads.data(), grads.size()), lr);
    }

    const bool last = result.diverged || it + 1 == config.iterations;
    if (last || (config.eval_interval && (it + 1) % config.eval_interval == 0)) {
      row.test_acc = evaluate(net, data.test, config.eval_batch);
      if (options.log) {
        *options.log << "iter " << it + 1 << " lr " << lr << " loss " << sx.loss << " batch_acc "
                     << row.train_acc << " test_acc " << *row.test_acc << std::endl;
      }
    }
    if (files) write_rows(files->metrics, std::span<const MetricsRow>(&row, 1));
    result.metrics.push_back(row);

    if (options.on_iteration) options.on_iteration({it, lr, sx.loss, &modulator.trace(), &net});
    if (last || (config.diag_interval && it % config.diag_interval == 0)) sample_diagnostics(it);
    if (result.diverged) break;
  }

  result.final_test_acc = result.metrics.back().test_acc.value_or(0.0);
  result.final_train_acc = evaluate(net, data.train, config.eval_batch);
  result.final_state = net.state();
  if (options.write_files) {
    save_checkpoint(result.run_dir / "checkpoint.bin", result.final_state);
    write_manifest(result.run_dir / "checkpoint.manifest", result.final_state);
    if (net.first_conv().channels() == 3) dump_filters(net.first_conv(), result.run_dir / "filters.ppm");
  }
  if (options.log && result.diverged) *options.log << "diverged: " << result.divergence_reason << std::endl;
  return result;
}

TrainResult train(const TrainConfig& config, const TrainOptions& options) {
  return train(config, prepare_data(config), options);
}

// ---------------------------------------------------------------------------

double comparison_lr(OptimizerKind kind, double configured) {
  switch (kind) {
    case OptimizerKind::Sgd:
    case OptimizerKind::Nesterov: return configured;
    case OptimizerKind::AdaGrad: return 0.01;
    case OptimizerKind::AdaDelta: return 1.0;
    case OptimizerKind::Adam: return 0.001;
    case OptimizerKind::RmsProp: return 0.001;
  }
  return configured;
}

std::vector<ComparisonRow> compare_optimizers(const TrainConfig& config, const TrainData& data,
                                              const TrainOptions& options) {
  std::vector<ComparisonRow> rows;
  auto run = [&](const std::string& name, TrainConfig c) {
    if (options.log) *options.log << "== " << name << std::endl;
    const TrainResult r = train(c, data, options);
    rows.push_back({name, r.final_train_acc, r.final_test_acc, r.final_loss, r.diverged});
  };
  for (OptimizerKind kind : all_optimizers()) {
    TrainConfig c = config;
    c.init.kind = InitKind::Msra;
    c.reg.kind = RegKind::L2;
    c.optimizer.kind = kind;
    c.lr.base = comparison_lr(kind, config.lr.base);
    run(to_string(kind), c);
  }
  TrainConfig ours = config;
  ours.init.kind = InitKind::Ortho;
  ours.reg.kind = RegKind::Orthonormal;
  ours.optimizer.kind = OptimizerKind::Sgd;
  run("ours", ours);

  if (options.write_files) {
    fs::create_directories(config.out);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(config.hash()));
    std::ofstream os(config.out / ("compare_" + std::string(hex) + "_s" + std::to_string(config.seed) + ".csv"));
    write_comparison_csv(os, rows);
  }
  return rows;
}

void write_comparison_csv(std::ostream& os, std::span<const ComparisonRow> rows) {
  os << kComparisonHeader << '\n';
  for (const auto& r : rows) {
    os << r.method << ',' << csv::format(r.train_acc) << ',' << csv::format(r.test_acc) << ','
       << csv::format(r.final_loss) << ',' << (r.diverged ? 1 : 0) << '\n';
  }
}

}  // namespace orthonet
