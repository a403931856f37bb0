#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "mugnet/pointcloud.hpp"

namespace mugnet {

// Dimensionality descriptors of one point's neighborhood.
struct PointGeometry {
  double linearity = 0.0;
  double planarity = 0.0;
  double scattering = 1.0;
  double verticality = 0.0;
  double elevation = 0.0;
};

using GeometricFeatures = std::vector<PointGeometry>;

constexpr std::size_t kDefaultFeatureK = 10;

// Symmetric 3x3 matrix stored as xx, xy, xz, yy, yz, zz.
using Sym3 = std::array<double, 6>;

struct SymEigen3 {
  std::array<double, 3> values;   // descending
  std::array<Point3, 3> vectors;  // unit eigenvectors matching `values`
};

// Closed-form eigenvalues; falls back to Jacobi rotations when the smallest
// eigenvalue is (nearly) repeated and its eigenvector is ill-conditioned.
SymEigen3 eigen_sym3(const Sym3& m);
SymEigen3 jacobi_eigen_sym3(const Sym3& m);

// Features from an eigenvalue triple (any order, negatives clamped to 0).
PointGeometry geometry_from_eigen(const SymEigen3& eig);

// Per-point features over the k nearest neighbors (the point included).
// Throws ParameterError unless 3 <= k <= N.
GeometricFeatures geometric_features(const PointCloud& cloud, std::size_t k = kDefaultFeatureK);

}  // namespace mugnet
