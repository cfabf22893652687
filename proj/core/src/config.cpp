#include "orthonet/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "orthonet/csv.hpp"
#include "orthonet/data.hpp"
#include "orthonet/errors.hpp"

namespace orthonet {

double LrSchedule::at(std::size_t iteration) const {
  double lr = base;
  for (std::size_t d : drop_iters)
    if (iteration >= d) lr /= drop_factor;
  return lr;
}

void TrainConfig::validate() const {
  if (network.n < 1) throw ConfigError("network.n must be >= 1");
  if (network.num_classes < 1) throw ConfigError("network.classes must be >= 1");
  for (std::size_t c : network.channels)
    if (c < 1) throw ConfigError("network.channels must be positive");
  if (iterations == 0) throw ConfigError("iterations must be > 0");
  if (!(lr.base > 0.0)) throw ConfigError("lr.base must be > 0");
  if (!(lr.drop_factor > 0.0)) throw ConfigError("lr.drop_factor must be > 0");
  if (!std::is_sorted(lr.drop_iters.begin(), lr.drop_iters.end()))
    throw ConfigError("lr.drop_iters must be sorted ascending");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (batch normalization)");
  if (eval_batch < 1) throw ConfigError("eval.batch_size must be >= 1");
  if (!(reg.lambda >= 0.0)) throw ConfigError("reg.lambda must be >= 0");
  if (!(bn_eps >= 0.0)) throw ConfigError("bn.eps must be >= 0");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) throw ConfigError("bn.momentum must be in [0, 1]");
  if (init.kind == InitKind::Gaussian && !(init.gaussian_std >= 0.0))
    throw ConfigError("init.gaussian_std must be >= 0");
  optimizer.validate();
  modulation_policy().validate();
  if (modulation.enabled && network.residual)
    throw ConfigError("modulation is defined for plain networks only (network.residual = true)");
  if (data.source == DataSource::Cifar10 && data.dir.empty())
    throw ConfigError("data.dir is required when data.source = cifar10");
  if (data.source == DataSource::Cifar10 && network.num_classes != static_cast<std::size_t>(kCifarClasses))
    throw ConfigError("network.classes must be 10 for cifar10");
  if (data.source == DataSource::Synthetic) {
    if (data.synthetic_classes < 1 || data.synthetic_per_class < 1 || data.synthetic_test_per_class < 1)
      throw ConfigError("synthetic data needs at least one class and one sample per class");
    if (data.synthetic_classes != network.num_classes)
      throw ConfigError("data.synthetic_classes must equal network.classes");
  }
}

ModulationPolicy TrainConfig::modulation_policy() const {
  ModulationPolicy p = modulation;
  p.active_iters = modulation_active_iters
                       ? *modulation_active_iters
                       : static_cast<std::size_t>(std::llround(0.04 * static_cast<double>(iterations)));
  return p;
}

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string fmt(double v) { return csv::format(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

std::string source_name(DataSource s) { return s == DataSource::Cifar10 ? "cifar10" : "synthetic"; }

}  // namespace

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  auto kv = [&os](const char* k, const std::string& v) { os << k << " = " << v << '\n'; };
  const auto& c = network.channels;
  kv("network.n", std::to_string(network.n));
  kv("network.channels", std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]));
  kv("network.residual", fmt(network.residual));
  kv("network.classes", std::to_string(network.num_classes));
  kv("init", to_string(init.kind));
  kv("init.gaussian_std", fmt(init.gaussian_std));
  kv("reg.kind", to_string(reg.kind));
  kv("reg.lambda", fmt(reg.lambda));
  kv("modulation.enabled", fmt(modulation.enabled));
  kv("modulation.active_iters",
     modulation_active_iters ? std::to_string(*modulation_active_iters) : std::string("auto"));
  kv("modulation.tau", fmt(modulation.tau));
  kv("modulation.always_on", fmt(modulation.always_on));
  kv("optimizer", to_string(optimizer.kind));
  kv("optimizer.momentum", fmt(optimizer.momentum));
  kv("optimizer.beta1", fmt(optimizer.beta1));
  kv("optimizer.beta2", fmt(optimizer.beta2));
  kv("optimizer.eps", fmt(optimizer.eps));
  kv("optimizer.rms_decay", fmt(optimizer.rms_decay));
  kv("optimizer.adadelta_rho", fmt(optimizer.adadelta_rho));
  kv("optimizer.adadelta_eps", fmt(optimizer.adadelta_eps));
  kv("lr.base", fmt(lr.base));
  kv("lr.drop_factor", fmt(lr.drop_factor));
  kv("lr.drop_iters", lr.drop_iters.empty() ? std::string("none") : join(lr.drop_iters));
  kv("iterations", std::to_string(iterations));
  kv("batch_size", std::to_string(batch_size));
  kv("seed", std::to_string(seed));
  kv("data.source", source_name(data.source));
  kv("data.dir", data.dir.string());
  kv("data.train_subset", std::to_string(data.train_subset));
  kv("data.test_subset", std::to_string(data.test_subset));
  kv("data.synthetic_classes", std::to_string(data.synthetic_classes));
  kv("data.synthetic_per_class", std::to_string(data.synthetic_per_class));
  kv("data.synthetic_test_per_class", std::to_string(data.synthetic_test_per_class));
  kv("data.synthetic_distance", fmt(data.synthetic_distance));
  kv("data.synthetic_seed", std::to_string(data.synthetic_seed));
  kv("data.augment_flip", fmt(data.augment_flip));
  kv("eval.interval", std::to_string(eval_interval));
  kv("eval.batch_size", std::to_string(eval_batch));
  kv("diag.interval", std::to_string(diag_interval));
  kv("out", out.string());
  kv("bn.eps", fmt(bn_eps));
  kv("bn.momentum", fmt(bn_momentum));
  return os.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t TrainConfig::hash() const {
  std::istringstream is(to_text());
  std::string line, kept;
  while (std::getline(is, line)) {
    if (line.rfind("seed =", 0) == 0 || line.rfind("out =", 0) == 0) continue;
    kept += line + '\n';
  }
  return fnv1a64(kept);
}

std::filesystem::path TrainConfig::run_dir() const {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash()));
  return out / ("run_" + std::string(hex) + "_s" + std::to_string(seed));
}

// ---------------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return csv::parse_double(v);
  } catch (const Error&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true|false, got '" + v + "'");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v == "none" || v.empty()) return out;
  for (const auto& f : csv::split(v)) out.push_back(to_size(key, trim(f)));
  return out;
}

}  // namespace

void set_config_value(TrainConfig& c, const std::string& key, const std::string& v) {
  auto wrap = [&](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(key + ": " + e.what());
    }
  };
  if (key == "network.n") c.network.n = to_size(key, v);
  else if (key == "network.channels") {
    const auto ch = to_sizes(key, v);
    if (ch.size() != 3) throw ConfigError(key + ": expected three comma-separated widths");
    c.network.channels = {ch[0], ch[1], ch[2]};
  } else if (key == "network.residual") c.network.residual = to_bool(key, v);
  else if (key == "network.classes") c.network.num_classes = to_size(key, v);
  else if (key == "init") wrap([&] { c.init.kind = parse_init_kind(v); });
  else if (key == "init.gaussian_std") c.init.gaussian_std = to_double(key, v);
  else if (key == "reg.kind") wrap([&] { c.reg.kind = parse_reg_kind(v); });
  else if (key == "reg.lambda") c.reg.lambda = to_double(key, v);
  else if (key == "modulation.enabled") c.modulation.enabled = to_bool(key, v);
  else if (key == "modulation.active_iters") {
    if (v == "auto") c.modulation_active_iters.reset();
    else c.modulation_active_iters = to_size(key, v);
  } else if (key == "modulation.tau") c.modulation.tau = to_double(key, v);
  else if (key == "modulation.always_on") c.modulation.always_on = to_bool(key, v);
  else if (key == "optimizer") wrap([&] { c.optimizer.kind = parse_optimizer_kind(v); });
  else if (key == "optimizer.momentum") c.optimizer.momentum = to_double(key, v);
  else if (key == "optimizer.beta1") c.optimizer.beta1 = to_double(key, v);
  else if (key == "optimizer.beta2") c.optimizer.beta2 = to_double(key, v);
  else if (key == "optimizer.eps") c.optimizer.eps = to_double(key, v);
  else if (key == "optimizer.rms_decay") c.optimizer.rms_decay = to_double(key, v);
  else if (key == "optimizer.adadelta_rho") c.optimizer.adadelta_rho = to_double(key, v);
  else if (key == "optimizer.adadelta_eps") c.optimizer.adadelta_eps = to_double(key, v);
  else if (key == "lr.base") c.lr.base = to_double(key, v);
  else if (key == "lr.drop_factor") c.lr.drop_factor = to_double(key, v);
  else if (key == "lr.drop_iters") c.lr.drop_iters = to_sizes(key, v);
  else if (key == "iterations") c.iterations = to_size(key, v);
  else if (key == "batch_size") c.batch_size = to_size(key, v);
  else if (key == "seed") c.seed = to_size(key, v);
  else if (key == "data.source") {
    if (v == "cifar10") c.data.source = DataSource::Cifar10;
    else if (v == "synthetic") c.data.source = DataSource::Synthetic;
    else throw ConfigError(key + ": expected cifar10|synthetic, got '" + v + "'");
  } else if (key == "data.dir") c.data.dir = v;
  else if (key == "data.train_subset") c.data.train_subset = to_size(key, v);
  else if (key == "data.test_subset") c.data.test_subset = to_size(key, v);
  else if (key == "data.synthetic_classes") c.data.synthetic_classes = to_size(key, v);
  else if (key == "data.synthetic_per_class") c.data.synthetic_per_class = to_size(key, v);
  else if (key == "data.synthetic_test_per_class") c.data.synthetic_test_per_class = to_size(key, v);
  else if (key == "data.synthetic_distance") c.data.synthetic_distance = to_double(key, v);
  else if (key == "data.synthetic_seed") c.data.synthetic_seed = to_size(key, v);
  else if (key == "data.augment_flip") c.data.augment_flip = to_bool(key, v);
  else if (key == "eval.interval") c.eval_interval = to_size(key, v);
  else if (key == "eval.batch_size") c.eval_batch = to_size(key, v);
  else if (key == "diag.interval") c.diag_interval = to_size(key, v);
  else if (key == "out") c.out = v;
  else if (key == "bn.eps") c.bn_eps = to_double(key, v);
  else if (key == "bn.momentum") c.bn_momentum = to_double(key, v);
  else throw ConfigError("unknown key '" + key + "'");
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig c;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!seen.insert(key).second)
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    try {
      set_config_value(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

}  // namespace orthonet
