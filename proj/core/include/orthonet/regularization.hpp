#pragma once

#include <string>

#include "orthonet/ortho_init.hpp"
#include "orthonet/tensor.hpp"

namespace orthonet {

enum class RegKind { None, L2, Orthonormal };

/// One regularizer for every parametric weight of a network.
struct RegConfig {
  RegKind kind = RegKind::L2;
  double lambda = 1e-4;
};

std::string to_string(RegKind kind);
RegKind parse_reg_kind(const std::string& name);

/// (lambda/2) * sum over groups of ||W_g^T W_g - I||_F^2 on an f_in x f_out matrix.
double ortho_penalty(const Tensor& w, double lambda, const GroupPartition& partition);
double ortho_penalty(const Tensor& w, double lambda);

/// 2 * lambda * W_g (W_g^T W_g - I), per group.
Tensor ortho_grad(const Tensor& w, double lambda, const GroupPartition& partition);
Tensor ortho_grad(const Tensor& w, double lambda);

double l2_penalty(const Tensor& w, double lambda);
Tensor l2_grad(const Tensor& w, double lambda);

/// Dispatch on `config.kind`; None yields 0 / a zero tensor.
double penalty(const RegConfig& config, const Tensor& w, const GroupPartition& partition);
Tensor penalty_grad(const RegConfig& config, const Tensor& w, const GroupPartition& partition);

}  // namespace orthonet
