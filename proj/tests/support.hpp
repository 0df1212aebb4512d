#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "sec/matrix.hpp"
#include "sec/random.hpp"

namespace testing {

inline sec::Matrix random_matrix(std::size_t r, std::size_t c, sec::Engine& rng, double scale = 1.0) {
  sec::Matrix m(r, c);
  for (double& x : m.values()) x = scale * sec::standard_normal(rng);
  return m;
}

// Central difference of f with respect to every entry of `x`.
inline sec::Matrix numeric_gradient(sec::Matrix& x, const std::function<double()>& f, double h = 1e-6) {
  sec::Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.values()[i];
    x.values()[i] = keep + h;
    const double up = f();
    x.values()[i] = keep - h;
    const double down = f();
    x.values()[i] = keep;
    g.values()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double max_abs_diff(const sec::Matrix& a, const sec::Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations in long double.
inline std::vector<long double> symmetric_eigenvalues(std::vector<std::vector<long double>> a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    long double off = 0.0L;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-40L) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0L) continue;
        const long double theta = (a[q][q] - a[p][p]) / (2.0L * a[p][q]);
        const long double t = (theta >= 0 ? 1.0L : -1.0L) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0L));
        const long double c = 1.0L / std::sqrt(t * t + 1.0L);
        const long double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const long double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const long double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<long double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  return ev;
}

}  // namespace testing
