#pragma once

#include <cstddef>
#include <vector>

#include "orthonet/kernel_matrix.hpp"
#include "orthonet/rng.hpp"

namespace orthonet {

struct ColumnRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const ColumnRange&) const = default;
};

/// Disjoint contiguous column ranges covering [0, f_out), each of size <= f_in.
struct GroupPartition {
  std::vector<ColumnRange> groups;
  std::size_t count() const { return groups.size(); }
  bool operator==(const GroupPartition&) const = default;
};

/// One group when f_out <= f_in, otherwise ceil(f_out / f_in) groups of size
/// f_in with a smaller trailing group for the remainder.
GroupPartition partition_groups(std::size_t f_in, std::size_t f_out);

/// Residual norm (relative to the candidate's own norm) below which a column
/// is treated as linearly dependent and redrawn.
inline constexpr double kDegenerateResidual = 1e-8;

/// Modified Gram-Schmidt with one re-orthogonalization pass over the columns
/// of a d x n matrix (n <= d). Column 0 of the result is column 0 of the input,
/// normalized. Near-dependent columns are replaced by fresh Gaussian draws from
/// `rng`. Throws DomainError when n > d.
Tensor gram_schmidt(const Tensor& vectors, Rng& rng);

/// Gaussian(0, sqrt(2/f_in)) draws orthonormalized group by group.
KernelMatrix ortho_init(std::size_t kw, std::size_t kh, std::size_t channels,
                        std::size_t outputs, Rng& rng);

/// "msra": i.i.d. Gaussian(0, sqrt(2/f_in)).
KernelMatrix msra_init(std::size_t kw, std::size_t kh, std::size_t channels,
                       std::size_t outputs, Rng& rng);

/// i.i.d. Gaussian(0, std).
KernelMatrix gaussian_init(std::size_t kw, std::size_t kh, std::size_t channels,
                           std::size_t outputs, double std, Rng& rng);

/// Orthonormal columns (per group) for a plain f_in x f_out matrix.
Tensor ortho_matrix(std::size_t f_in, std::size_t f_out, Rng& rng);

/// Max-abs deviation of V_g^T V_g from I over the groups of `partition`.
double orthonormality_error(const Tensor& w, const GroupPartition& partition);

}  // namespace orthonet
