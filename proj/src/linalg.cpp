#include "sec/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sec/error.hpp"

namespace sec {
namespace {

// Column-major scratch copy so that Jacobi rotations touch contiguous memory.
struct Columns {
  std::size_t rows = 0;
  std::vector<std::vector<double>> cols;
};

Columns to_columns(const Matrix& a) {
  Columns c{a.rows(), std::vector<std::vector<double>>(a.cols(), std::vector<double>(a.rows()))};
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c.cols[j][i] = a(i, j);
  return c;
}

double dot(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

void rotate(std::vector<double>& x, std::vector<double>& y, double c, double s) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xp = x[i];
    const double yq = y[i];
    x[i] = c * xp - s * yq;
    y[i] = s * xp + c * yq;
  }
}

// Replaces the listed columns of `u` by unit vectors orthogonal to every other
// column. Used when singular values vanish and w_j / sigma_j is undefined.
void complete_basis(Matrix& u, const std::vector<bool>& valid) {
  const std::size_t m = u.rows();
  std::vector<bool> done = valid;
  std::size_t probe = 0;
  for (std::size_t j = 0; j < u.cols(); ++j) {
    if (done[j]) continue;
    for (; probe < m; ++probe) {
      std::vector<double> cand(m, 0.0);
      cand[probe] = 1.0;
      // Two Gram-Schmidt passes for stability.
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < u.cols(); ++k) {
          if (!done[k]) continue;
          double proj = 0.0;
          for (std::size_t i = 0; i < m; ++i) proj += u(i, k) * cand[i];
          for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * u(i, k);
        }
      }
      const double norm = std::sqrt(dot(cand, cand));
      if (norm > 1e-6) {
        for (std::size_t i = 0; i < m; ++i) u(i, j) = cand[i] / norm;
        done[j] = true;
        ++probe;
        break;
      }
    }
    if (!done[j]) throw NumericalError("svd: failed to complete orthonormal basis");
  }
}

// Tall or square case, rows >= cols.
SvdResult svd_tall(const Matrix& a, const SvdOptions& options) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Columns w = to_columns(a);
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) v[j][j] = 1.0;

  int sweep = 0;
  bool converged = n < 2;
  while (!converged && sweep < options.max_sweeps) {
    ++sweep;
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = dot(w.cols[p], w.cols[p]);
        const double beta = dot(w.cols[q], w.cols[q]);
        const double gamma = dot(w.cols[p], w.cols[q]);
        if (gamma == 0.0 || std::abs(gamma) <= options.tolerance * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(w.cols[p], w.cols[q], c, s);
        rotate(v[p], v[q], c, s);
      }
    }
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(dot(w.cols[j], w.cols[j]));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdResult out;
  out.sweeps = sweep;
  out.u = Matrix(m, n);
  out.v = Matrix(n, n);
  out.singular_values.resize(n);
  const double sigma_max = n == 0 ? 0.0 : sigma[order[0]];
  std::vector<bool> valid(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.singular_values[k] = sigma[j];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v[j][i];
    if (sigma[j] > 0.0 && sigma[j] > sigma_max * 1e-14) {
      for (std::size_t i = 0; i < m; ++i) out.u(i, k) = w.cols[j][i] / sigma[j];
      valid[k] = true;
    }
  }
  if (std::find(valid.begin(), valid.end(), false) != valid.end()) complete_basis(out.u, valid);
  return out;
}

}  // namespace

SvdResult svd(const Matrix& a, const SvdOptions& options) {
  if (!a.all_finite()) throw NumericalError("svd: non-finite entry in " + a.shape_string() + " input");
  if (a.rows() >= a.cols()) return svd_tall(a, options);
  SvdResult t = svd_tall(transpose(a), options);
  std::swap(t.u, t.v);
  return t;
}

double nuclear_norm(const Matrix& a) {
  const SvdResult s = svd(a);
  double total = 0.0;
  for (double x : s.singular_values) total += x;
  return total;
}

NuclearNormWithGrad nuclear_norm_with_grad(const Matrix& a) {
  const SvdResult s = svd(a);
  NuclearNormWithGrad out;
  for (double x : s.singular_values) out.value += x;
  if (!s.singular_values.empty() && s.singular_values.back() <= kNuclearGradRankTolerance) {
    throw DegenerateSubgradientError("nuclear_norm_grad: smallest singular value " +
                                     std::to_string(s.singular_values.back()) + " of " + a.shape_string() +
                                     " input is below the rank tolerance");
  }
  out.grad = matmul_a_bt(s.u, s.v);
  return out;
}

Matrix nuclear_norm_grad(const Matrix& a) { return nuclear_norm_with_grad(a).grad; }

}  // namespace sec
