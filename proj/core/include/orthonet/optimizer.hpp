#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "orthonet/tensor.hpp"

namespace orthonet {

enum class OptimizerKind { Sgd, Nesterov, AdaGrad, AdaDelta, Adam, RmsProp };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& name);
const std::vector<OptimizerKind>& all_optimizers();

/// Update rules, elementwise, with g the gradient and p the parameter:
///   sgd       v = mu*v - lr*g;                      p += v
///   nesterov  v' = mu*v - lr*g;                     p += -mu*v + (1+mu)*v'
///   adagrad   h += g^2;                             p -= lr*g / (sqrt(h) + eps)
///   adadelta  Eg = r*Eg + (1-r)*g^2;  d = -sqrt(Ex + e)/sqrt(Eg + e) * g;
///             Ex = r*Ex + (1-r)*d^2;                p += d          (lr unused)
///   adam      m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2;
///             p -= lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
///   rmsprop   h = d*h + (1-d)*g^2;                  p -= lr*g / (sqrt(h) + eps)
struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;  // adagrad, adam, rmsprop
  double rms_decay = 0.99;
  double adadelta_rho = 0.95;
  double adadelta_eps = 1e-6;

  void validate() const;
};

/// Per-parameter slots, created on the first step with the parameter shapes.
struct OptimizerState {
  OptimizerConfig config;
  std::vector<std::vector<Tensor>> slots;
  std::size_t steps = 0;

  explicit OptimizerState(OptimizerConfig cfg = {});
};

/// One update of every parameter. Throws DimensionError when a gradient or an
/// existing slot does not match its parameter's shape.
void step(OptimizerState& state, std::span<Tensor* const> params,
          std::span<const Tensor* const> grads, double lr);

}  // namespace orthonet
