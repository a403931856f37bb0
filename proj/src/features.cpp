#include "mugnet/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mugnet/errors.hpp"
#include "mugnet/kdtree.hpp"

namespace mugnet {

namespace {

Point3 cross(const Point3& a, const Point3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm2(const Point3& a) { return a[0] * a[0] + a[1] * a[1] + a[2] * a[2]; }

void sort_desc(SymEigen3& e) {
  std::array<int, 3> idx{0, 1, 2};
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return e.values[a] > e.values[b]; });
  SymEigen3 out;
  for (int i = 0; i < 3; ++i) {
    out.values[i] = e.values[idx[i]];
    out.vectors[i] = e.vectors[idx[i]];
  }
  e = out;
}

// Unit eigenvector for `lambda` from the best-conditioned cross product of
// rows of (M - lambda I). Returns false if every cross product is tiny.
bool null_vector(const Sym3& m, double lambda, double scale, Point3& out) {
  const Point3 r0{m[0] - lambda, m[1], m[2]};
  const Point3 r1{m[1], m[3] - lambda, m[4]};
  const Point3 r2{m[2], m[4], m[5] - lambda};
  const std::array<Point3, 3> c{cross(r0, r1), cross(r0, r2), cross(r1, r2)};
  int best = 0;
  for (int i = 1; i < 3; ++i) {
    if (norm2(c[i]) > norm2(c[best])) best = i;
  }
  const double n2 = norm2(c[best]);
  if (!(n2 > 1e-18 * scale * scale * scale * scale)) return false;
  const double inv = 1.0 / std::sqrt(n2);
  out = {c[best][0] * inv, c[best][1] * inv, c[best][2] * inv};
  return true;
}

}  // namespace

SymEigen3 jacobi_eigen_sym3(const Sym3& s) {
  double a[3][3] = {{s[0], s[1], s[2]}, {s[1], s[3], s[4]}, {s[2], s[4], s[5]}};
  double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    if (off == 0.0) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), sn = t * c;
        for (int k = 0; k < 3; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - sn * akq;
          a[k][q] = sn * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - sn * aqk;
          a[q][k] = sn * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - sn * vkq;
          v[k][q] = sn * vkp + c * vkq;
        }
      }
    }
  }
  SymEigen3 e;
  for (int i = 0; i < 3; ++i) {
    e.values[i] = a[i][i];
    e.vectors[i] = {v[0][i], v[1][i], v[2][i]};
  }
  sort_desc(e);
  return e;
}

SymEigen3 eigen_sym3(const Sym3& m) {
  const double p1 = m[1] * m[1] + m[2] * m[2] + m[4] * m[4];
  const double trace = m[0] + m[3] + m[5];
  const double scale = std::max({std::abs(m[0]), std::abs(m[3]), std::abs(m[5]), std::sqrt(p1)});
  if (scale == 0.0) {
    return {{0.0, 0.0, 0.0}, {Point3{1, 0, 0}, Point3{0, 1, 0}, Point3{0, 0, 1}}};
  }
  const double q = trace / 3.0;
  const double d0 = m[0] - q, d1 = m[3] - q, d2 = m[5] - q;
  const double p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  if (p == 0.0) return jacobi_eigen_sym3(m);
  // B = (M - qI) / p, r = det(B) / 2
  const double b00 = d0 / p, b11 = d1 / p, b22 = d2 / p;
  const double b01 = m[1] / p, b02 = m[2] / p, b12 = m[4] / p;
  const double det = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02) +
                     b02 * (b01 * b12 - b11 * b02);
  const double r = std::clamp(det / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  SymEigen3 e;
  e.values[0] = q + 2.0 * p * std::cos(phi);
  e.values[2] = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  e.values[1] = trace - e.values[0] - e.values[2];

  // Well separated smallest eigenvalue: analytic eigenvectors.
  if (e.values[1] - e.values[2] > 1e-6 * scale && e.values[0] - e.values[1] > 1e-6 * scale &&
      null_vector(m, e.values[2], scale, e.vectors[2]) &&
      null_vector(m, e.values[0], scale, e.vectors[0])) {
    e.vectors[1] = cross(e.vectors[2], e.vectors[0]);
    return e;
  }
  return jacobi_eigen_sym3(m);
}

PointGeometry geometry_from_eigen(const SymEigen3& eig) {
  std::array<double, 3> l = eig.values;
  for (auto& v : l) v = std::max(v, 0.0);
  std::sort(l.begin(), l.end(), std::greater<>());
  PointGeometry g;
  const double total = l[0] + l[1] + l[2];
  if (!(l[0] > 0.0) || !(total > 0.0)) return g;  // coincident points: pure scattering
  for (auto& v : l) v /= total;
  g.linearity = (l[0] - l[1]) / l[0];
  g.planarity = (l[1] - l[2]) / l[0];
  g.scattering = l[2] / l[0];
  const double s = g.linearity + g.planarity + g.scattering;
  g.linearity /= s;
  g.planarity /= s;
  g.scattering /= s;
  // eig.vectors[2] belongs to the smallest eigenvalue of the input ordering.
  g.verticality = std::min(1.0, std::abs(eig.vectors[2][2]));
  return g;
}

GeometricFeatures geometric_features(const PointCloud& cloud, std::size_t k) {
  const std::size_t n = cloud.size();
  if (k < 3) throw ParameterError("feature neighborhood k must be at least 3");
  if (k > n) {
    throw ParameterError("feature neighborhood k = " + std::to_string(k) + " exceeds " +
                         std::to_string(n) + " points");
  }
  double zmin = cloud.positions[0][2];
  for (const auto& p : cloud.positions) zmin = std::min(zmin, p[2]);

  const KnnTable table = knn_table(cloud.positions, k, true);
  GeometricFeatures out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Point3 mean{0, 0, 0};
    for (auto j : table.row(i)) {
      for (int d = 0; d < 3; ++d) mean[d] += cloud.positions[j][d];
    }
    for (auto& v : mean) v /= static_cast<double>(k);
    Sym3 cov{};
    for (auto j : table.row(i)) {
      const double x = cloud.positions[j][0] - mean[0];
      const double y = cloud.positions[j][1] - mean[1];
      const double z = cloud.positions[j][2] - mean[2];
      cov[0] += x * x;
      cov[1] += x * y;
      cov[2] += x * z;
      cov[3] += y * y;
      cov[4] += y * z;
      cov[5] += z * z;
    }
    for (auto& v : cov) v /= static_cast<double>(k);
    out[i] = geometry_from_eigen(eigen_sym3(cov));
    out[i].elevation = cloud.positions[i][2] - zmin;
  }
  return out;
}

}  // namespace mugnet
