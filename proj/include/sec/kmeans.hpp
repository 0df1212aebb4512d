#pragma once

#include <cstdint>
#include <vector>

#include "sec/matrix.hpp"

namespace sec {

struct KMeansModel {
  Matrix centroids;                  // C×h
  std::vector<std::size_t> assignments;
  double inertia = 0.0;              // sum of squared distances to assigned centroids
  std::vector<double> inertia_history;  // after every Lloyd iteration
  int iterations = 0;
};

struct KMeansOptions {
  int max_iterations = 300;
};

// Index of the nearest row of `centroids` to `point`; ties go to the lowest index.
std::size_t nearest_centroid(const Matrix& centroids, std::span<const double> point, double* squared = nullptr);

// Lloyd's algorithm with k-means++ seeding. Deterministic for fixed
// (points, clusters, seed). Empty clusters are re-seeded with the point
// farthest from its assigned centroid.
KMeansModel kmeans(const Matrix& points, std::size_t clusters, std::uint64_t seed, const KMeansOptions& options = {});

}  // namespace sec
