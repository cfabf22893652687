#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "orthonet/errors.hpp"
#include "orthonet/tensor.hpp"

namespace orthonet {

enum class ParametricKind { Conv, Fc };

/// Second moments of the error tensors entering each parametric layer's
/// backward pass in one iteration. Index 0 is the lowest layer.
struct ErrorMomentTrace {
  std::size_t iteration = 0;
  std::vector<double> q;      // after modulation (what actually propagated)
  std::vector<double> q_raw;  // as measured, before any rescale
  std::vector<double> scale;  // factor applied to each layer's error (1 = untouched)
  std::vector<ParametricKind> kinds;

  std::size_t size() const { return q.size(); }
};

struct ModulationPolicy {
  bool enabled = false;
  std::size_t active_iters = 0;  // modulate while iteration <= active_iters
  double tau = 2.0;              // trigger when the consecutive ratio leaves [1/tau, tau]
  bool always_on = false;        // ignore active_iters (ablation only)

  void validate() const;
  bool active_at(std::size_t iteration) const {
    return enabled && (always_on || iteration <= active_iters);
  }
};

/// Raised when the lower layer's moment is zero and no rescale exists.
class VanishedSignalError : public DomainError {
 public:
  using DomainError::DomainError;
};

ErrorMomentTrace record_moments(std::span<const Tensor> errors, std::size_t iteration = 0);

/// sqrt(q_hi / q_lo). Throws VanishedSignalError when q_lo <= 0.
double scale_factor(double q_hi, double q_lo);

/// True when max(q_hi/q_lo, q_lo/q_hi) > tau.
bool moments_mismatch(double q_hi, double q_lo, double tau);

/// Rescales `error` (the error about to propagate below parametric layer
/// `layer`) so its second moment matches trace.q[layer + 1] when the policy is
/// active and the two moments mismatch. Otherwise returns `error` unchanged.
Tensor apply_modulation(const ModulationPolicy& policy, const ErrorMomentTrace& trace,
                        const Tensor& error, std::size_t layer);

/// Backward-pass hook. Errors arrive top-down, one per parametric layer; conv
/// errors are rescaled against the conv directly above. The FC head is traced
/// but never rescaled and never serves as a reference.
class BackwardModulator {
 public:
  BackwardModulator(ModulationPolicy policy, std::vector<ParametricKind> kinds);

  void begin(std::size_t iteration);
  /// `index` counts parametric layers bottom-up; calls must run top-down.
  void on_error(std::size_t index, Tensor& error);

  const ErrorMomentTrace& trace() const { return trace_; }
  const ModulationPolicy& policy() const { return policy_; }
  std::size_t skipped() const { return skipped_; }

 private:
  ModulationPolicy policy_;
  ErrorMomentTrace trace_;
  std::ptrdiff_t upper_conv_ = -1;
  std::size_t skipped_ = 0;
};

}  // namespace orthonet
