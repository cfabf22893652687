#include "orthonet/optimizer.hpp"

#include <cmath>

#include "orthonet/errors.hpp"

namespace orthonet {

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::Nesterov: return "nesterov";
    case OptimizerKind::AdaGrad: return "adagrad";
    case OptimizerKind::AdaDelta: return "adadelta";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::RmsProp: return "rmsprop";
  }
  return "?";
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  for (OptimizerKind k : all_optimizers())
    if (to_string(k) == name) return k;
  throw ConfigError("unknown optimizer '" + name +
                    "' (expected sgd|nesterov|adagrad|adadelta|adam|rmsprop)");
}

const std::vector<OptimizerKind>& all_optimizers() {
  static const std::vector<OptimizerKind> kinds{OptimizerKind::Sgd,      OptimizerKind::Nesterov,
                                                OptimizerKind::AdaGrad,  OptimizerKind::AdaDelta,
                                                OptimizerKind::Adam,     OptimizerKind::RmsProp};
  return kinds;
}

void OptimizerConfig::validate() const {
  auto unit = [](double v, const char* what) {
    if (!(v >= 0.0 && v < 1.0)) throw ConfigError(std::string(what) + " must be in [0, 1)");
  };
  unit(momentum, "optimizer.momentum");
  unit(beta1, "optimizer.beta1");
  unit(beta2, "optimizer.beta2");
  unit(rms_decay, "optimizer.rms_decay");
  unit(adadelta_rho, "optimizer.adadelta_rho");
  if (!(eps > 0.0)) throw ConfigError("optimizer.eps must be > 0");
  if (!(adadelta_eps > 0.0)) throw ConfigError("optimizer.adadelta_eps must be > 0");
}

OptimizerState::OptimizerState(OptimizerConfig cfg) : config(cfg) { config.validate(); }

namespace {

std::size_t slot_count(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::AdaDelta:
    case OptimizerKind::Adam: return 2;
    default: return 1;
  }
}

}  // namespace

void step(OptimizerState& state, std::span<Tensor* const> params,
          std::span<const Tensor* const> grads, double lr) {
  if (params.size() != grads.size())
    throw DimensionError("optimizer step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  const OptimizerConfig& c = state.config;
  if (state.slots.empty()) {
    for (const Tensor* p : params)
      state.slots.emplace_back(slot_count(c.kind), Tensor(p->shape()));
  }
  if (state.slots.size() != params.size())
    throw DimensionError("optimizer step: parameter count changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i], *grads[i], "optimizer gradient");
    for (const Tensor& s : state.slots[i]) require_same_shape(*params[i], s, "optimizer slot");
  }

  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i]->data();
    auto s0 = state.slots[i][0].data();
    const std::size_t n = p.size();
    switch (c.kind) {
      case OptimizerKind::Sgd:
        for (std::size_t k = 0; k < n; ++k) {
          s0[k] = c.momentum * s0[k] - lr * g[k];
          p[k] += s0[k];
        }
        break;
      case OptimizerKind::Nesterov:
        for (std::size_t k = 0; k < n; ++k) {
          const double v_prev = s0[k];
          s0[k] = c.momentum * s0[k] - lr * g[k];
          p[k] += -c.momentum * v_prev + (1.0 + c.momentum) * s0[k];
        }
        break;
      case OptimizerKind::AdaGrad:
        for (std::size_t k = 0; k < n; ++k) {
          s0[k] += g[k] * g[k];
          p[k] -= lr * g[k] / (std::sqrt(s0[k]) + c.eps);
        }
        break;
      case OptimizerKind::AdaDelta: {
        auto s1 = state.slots[i][1].data();
        const double r = c.adadelta_rho;
        for (std::size_t k = 0; k < n; ++k) {
          s0[k] = r * s0[k] + (1.0 - r) * g[k] * g[k];
          const double d = -std::sqrt(s1[k] + c.adadelta_eps) / std::sqrt(s0[k] + c.adadelta_eps) * g[k];
          s1[k] = r * s1[k] + (1.0 - r) * d * d;
          p[k] += d;
        }
        break;
      }
      case OptimizerKind::Adam: {
        auto s1 = state.slots[i][1].data();
        for (std::size_t k = 0; k < n; ++k) {
          s0[k] = c.beta1 * s0[k] + (1.0 - c.beta1) * g[k];
          s1[k] = c.beta2 * s1[k] + (1.0 - c.beta2) * g[k] * g[k];
          p[k] -= lr * (s0[k] / bc1) / (std::sqrt(s1[k] / bc2) + c.eps);
        }
        break;
      }
      case OptimizerKind::RmsProp:
        for (std::size_t k = 0; k < n; ++k) {
          s0[k] = c.rms_decay * s0[k] + (1.0 - c.rms_decay) * g[k] * g[k];
          p[k] -= lr * g[k] / (std::sqrt(s0[k]) + c.eps);
        }
        break;
    }
  }
}

}  // namespace orthonet
