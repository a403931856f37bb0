#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mugnet/pointcloud.hpp"

namespace mugnet {

struct Neighbor {
  std::size_t index;
  double dist2;
};

// Neighbors are ordered by (squared distance, index); equal distances resolve
// to the lower index, so results are unique and match a brute-force scan.
inline bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
}

// Exact k-nearest-neighbor queries over a fixed 3D point set.
class KdTree {
 public:
  explicit KdTree(std::span<const Point3> points, std::size_t leaf_size = 8);

  // k nearest points to `query`, optionally skipping index `exclude`.
  std::vector<Neighbor> knn(const Point3& query, std::size_t k,
                            std::size_t exclude = static_cast<std::size_t>(-1)) const;

  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    std::size_t begin, end;  // range into order_
    int axis = -1;           // -1 for leaves
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search(std::size_t node, const Point3& q, std::size_t k, std::size_t exclude,
              std::vector<Neighbor>& heap) const;

  std::vector<Point3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

// Row-major N x k neighbor table.
struct KnnTable {
  std::size_t k = 0;
  std::vector<std::size_t> index;
  std::vector<double> dist2;

  std::span<const std::size_t> row(std::size_t i) const { return {index.data() + i * k, k}; }
};

// k neighbors of every point. With include_self the point is a candidate of
// its own query (distance 0); otherwise it is excluded.
KnnTable knn_table(std::span<const Point3> points, std::size_t k, bool include_self);

}  // namespace mugnet
