#pragma once

#include <vector>

#include "sec/matrix.hpp"

namespace sec {

// Thin singular value decomposition a = u · diag(singular_values) · vᵀ.
// For a B×d input, r = min(B, d): u is B×r, v is d×r.
struct SvdResult {
  Matrix u;
  std::vector<double> singular_values;  // nonincreasing, all >= 0
  Matrix v;
  int sweeps = 0;
};

struct SvdOptions {
  double tolerance = 1e-12;
  int max_sweeps = 60;
};

// One-sided Jacobi SVD. Rejects non-finite input with NumericalError.
SvdResult svd(const Matrix& a, const SvdOptions& options = {});

// Sum of singular values.
double nuclear_norm(const Matrix& a);

// Smallest singular value accepted by nuclear_norm_grad.
inline constexpr double kNuclearGradRankTolerance = 1e-10;

// Gradient of the nuclear norm, u·vᵀ from the thin SVD. Throws
// DegenerateSubgradientError when the smallest singular value is at or below
// kNuclearGradRankTolerance, where the norm is not differentiable.
Matrix nuclear_norm_grad(const Matrix& a);

// Both quantities from a single decomposition.
struct NuclearNormWithGrad {
  double value = 0.0;
  Matrix grad;
};
NuclearNormWithGrad nuclear_norm_with_grad(const Matrix& a);

}  // namespace sec
