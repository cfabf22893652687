#include "orthonet/modulation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace orthonet {

void ModulationPolicy::validate() const {
  if (!(tau > 1.0)) throw DomainError("modulation tau must be > 1, got " + std::to_string(tau));
}

ErrorMomentTrace record_moments(std::span<const Tensor> errors, std::size_t iteration) {
  ErrorMomentTrace t;
  t.iteration = iteration;
  for (const Tensor& e : errors) {
    const double q = second_moment(e);
    t.q.push_back(q);
    t.q_raw.push_back(q);
    t.scale.push_back(1.0);
    t.kinds.push_back(ParametricKind::Conv);
  }
  return t;
}

double scale_factor(double q_hi, double q_lo) {
  if (!(q_lo > 0.0)) {
    throw VanishedSignalError("lower-layer error moment is " + std::to_string(q_lo) +
                              "; signal vanished, modulation skipped");
  }
  if (q_hi < 0.0) throw DomainError("second moment cannot be negative");
  return std::sqrt(q_hi / q_lo);
}

bool moments_mismatch(double q_hi, double q_lo, double tau) {
  if (q_hi == q_lo) return false;
  if (q_lo <= 0.0 || q_hi <= 0.0) return true;
  return std::max(q_hi / q_lo, q_lo / q_hi) > tau;
}

Tensor apply_modulation(const ModulationPolicy& policy, const ErrorMomentTrace& trace,
                        const Tensor& error, std::size_t layer) {
  if (!policy.active_at(trace.iteration) || layer + 1 >= trace.q.size()) return error;
  const double q_hi = trace.q[layer + 1];
  const double q_lo = second_moment(error);
  if (!moments_mismatch(q_hi, q_lo, policy.tau)) return error;
  return scale(error, scale_factor(q_hi, q_lo));
}

BackwardModulator::BackwardModulator(ModulationPolicy policy, std::vector<ParametricKind> kinds)
    : policy_(policy) {
  policy_.validate();
  trace_.kinds = std::move(kinds);
  const std::size_t n = trace_.kinds.size();
  trace_.q.assign(n, 0.0);
  trace_.q_raw.assign(n, 0.0);
  trace_.scale.assign(n, 1.0);
}

void BackwardModulator::begin(std::size_t iteration) {
  trace_.iteration = iteration;
  std::fill(trace_.q.begin(), trace_.q.end(), 0.0);
  std::fill(trace_.q_raw.begin(), trace_.q_raw.end(), 0.0);
  std::fill(trace_.scale.begin(), trace_.scale.end(), 1.0);
  upper_conv_ = -1;
}

void BackwardModulator::on_error(std::size_t index, Tensor& error) {
  const double q = second_moment(error);
  trace_.q_raw[index] = q;
  trace_.q[index] = q;
  if (trace_.kinds[index] != ParametricKind::Conv) return;

  if (upper_conv_ >= 0 && policy_.active_at(trace_.iteration)) {
    const double q_hi = trace_.q[static_cast<std::size_t>(upper_conv_)];
    if (q_hi > 0.0 && moments_mismatch(q_hi, q, policy_.tau)) {
      try {
        const double rho = scale_factor(q_hi, q);
        for (double& v : error.data()) v *= rho;
        trace_.scale[index] = rho;
        trace_.q[index] = second_moment(error);
      } catch (const VanishedSignalError&) {
        ++skipped_;
      }
    }
  }
  upper_conv_ = static_cast<std::ptrdiff_t>(index);
}

}  // namespace orthonet
