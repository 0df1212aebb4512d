#include "sec/kmeans.hpp"

#include <limits>
#include <string>

#include "sec/error.hpp"
#include "sec/random.hpp"

namespace sec {

std::size_t nearest_centroid(const Matrix& centroids, std::span<const double> point, double* squared) {
  if (point.size() != centroids.cols()) throw ContractError("nearest_centroid: point width does not match centroids");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  const std::size_t dim = point.size();
  const double* p = point.data();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double* q = centroids.row(c).data();
    double d = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double diff = q[j] - p[j];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (squared != nullptr) *squared = best_d;
  return best;
}

namespace {

Matrix seed_plus_plus(const Matrix& points, std::size_t clusters, Engine& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(clusters, points.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  std::copy(points.row(first).begin(), points.row(first).end(), centroids.row(0).begin());

  for (std::size_t c = 1; c < clusters; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(c - 1)));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      // All remaining points coincide with chosen centroids.
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
  }
  return centroids;
}

double assign(const Matrix& points, const Matrix& centroids, std::vector<std::size_t>& assignments,
              std::vector<double>& dist2) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    assignments[i] = nearest_centroid(centroids, points.row(i), &dist2[i]);
    inertia += dist2[i];
  }
  return inertia;
}

}  // namespace

KMeansModel kmeans(const Matrix& points, std::size_t clusters, std::uint64_t seed, const KMeansOptions& options) {
  if (clusters < 1) throw ContractError("kmeans: cluster count must be >= 1");
  if (clusters > points.rows()) {
    throw DataError("kmeans: " + std::to_string(clusters) + " clusters requested for " +
                    std::to_string(points.rows()) + " points");
  }
  if (!points.all_finite()) throw NumericalError("kmeans: non-finite point coordinates");

  Engine rng = make_engine(seed, {stream::kKMeans});
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();

  KMeansModel model;
  model.centroids = seed_plus_plus(points, clusters, rng);
  model.assignments.assign(n, 0);
  std::vector<double> dist2(n, 0.0);
  double inertia = assign(points, model.centroids, model.assignments, dist2);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    // Update step.
    Matrix sums(clusters, dim);
    std::vector<std::size_t> counts(clusters, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = sums.row(model.assignments[i]);
      auto src = points.row(i);
      for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
      ++counts[model.assignments[i]];
    }
    for (std::size_t c = 0; c < clusters; ++c) {
      if (counts[c] == 0) continue;
      auto dst = model.centroids.row(c);
      auto src = sums.row(c);
      for (std::size_t j = 0; j < dim; ++j) dst[j] = src[j] / static_cast<double>(counts[c]);
    }
    // Empty cluster repair: move the centroid onto the worst-served point.
    for (std::size_t c = 0; c < clusters; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = squared_distance(points.row(i), model.centroids.row(model.assignments[i]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      std::copy(points.row(far).begin(), points.row(far).end(), model.centroids.row(c).begin());
      --counts[model.assignments[far]];
      model.assignments[far] = c;
      counts[c] = 1;
    }

    // Assignment step.
    std::vector<std::size_t> previous = model.assignments;
    inertia = assign(points, model.centroids, model.assignments, dist2);
    model.inertia_history.push_back(inertia);
    model.iterations = iter + 1;
    if (previous == model.assignments) break;
  }
  model.inertia = inertia;
  return model;
}

}  // namespace sec
