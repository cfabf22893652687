#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "orthonet/tensor.hpp"

namespace orthonet {

enum class GradTarget { Conv, Bn, Relu, Fc, Softmax, OrthoReg, L2Reg };

std::string to_string(GradTarget target);
GradTarget parse_grad_target(const std::string& name);
const std::vector<GradTarget>& all_grad_targets();

/// Central-difference gradient of f with respect to every element of x.
/// x is perturbed in place and restored.
Tensor numeric_gradient(const std::function<double()>& f, Tensor& x, double h = 1e-5);

/// ||a - n|| / max(||a||, ||n||), or 0 when both vanish.
double relative_error(const Tensor& analytic, const Tensor& numeric);

struct GradCheckResult {
  GradTarget target = GradTarget::Conv;
  std::size_t trials = 0;
  std::size_t failures = 0;
  double max_rel_error = 0.0;  // worst tensor over all trials
  double tolerance = 1e-4;

  bool passed() const { return failures == 0; }
};

/// Random small instances of the target; each trial checks every gradient the
/// backward pass produces (inputs and parameters) against central differences
/// of a random linear functional of the output.
GradCheckResult gradcheck(GradTarget target, std::size_t trials, std::uint64_t seed,
                          double tolerance = 1e-4);

}  // namespace orthonet
