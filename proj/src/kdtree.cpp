#include "mugnet/kdtree.hpp"

#include <algorithm>
#include <numeric>

#include "mugnet/errors.hpp"

namespace mugnet {

namespace {

double sq_dist(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

KdTree::KdTree(std::span<const Point3> points, std::size_t leaf_size)
    : points_(points.begin(), points.end()), order_(points.size()), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / leaf_size_ + 2);
    build(0, points_.size());
  }
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({begin, end});
  if (end - begin <= leaf_size_) return id;

  Point3 lo = points_[order_[begin]], hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    const auto& p = points_[order_[i]];
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], p[d]);
      hi[d] = std::max(hi[d], p[d]);
    }
  }
  int axis = 0;
  for (int d = 1; d < 3; ++d) {
    if (hi[d] - lo[d] > hi[axis] - lo[axis]) axis = d;
  }
  if (hi[axis] == lo[axis]) return id;  // all coincident: keep as leaf

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] < points_[b][axis] ||
                            (points_[a][axis] == points_[b][axis] && a < b);
                   });
  nodes_[id].axis = axis;
  nodes_[id].split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(std::size_t node_id, const Point3& q, std::size_t k, std::size_t exclude,
                    std::vector<Neighbor>& heap) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      if (idx == exclude) continue;
      const Neighbor cand{idx, sq_dist(points_[idx], q)};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), neighbor_less);
      } else if (neighbor_less(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), neighbor_less);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), neighbor_less);
      }
    }
    return;
  }
  // Left subtree holds coordinates <= split, right holds >= split.
  const double diff = q[node.axis] - node.split;
  const std::size_t near = diff <= 0 ? node.left : node.right;
  const std::size_t far = diff <= 0 ? node.right : node.left;
  search(near, q, k, exclude, heap);
  if (heap.size() < k || diff * diff <= heap.front().dist2) search(far, q, k, exclude, heap);
}

std::vector<Neighbor> KdTree::knn(const Point3& query, std::size_t k, std::size_t exclude) const {
  const std::size_t available = points_.size() - (exclude < points_.size() ? 1 : 0);
  if (k > available) {
    throw ParameterError("k = " + std::to_string(k) + " exceeds the " + std::to_string(available) +
                         " available points");
  }
  std::vector<Neighbor> heap;
  heap.reserve(k + 1);
  if (k > 0) search(0, query, k, exclude, heap);
  std::sort_heap(heap.begin(), heap.end(), neighbor_less);
  return heap;
}

KnnTable knn_table(std::span<const Point3> points, std::size_t k, bool include_self) {
  KdTree tree(points);
  KnnTable table;
  table.k = k;
  table.index.resize(points.size() * k);
  table.dist2.resize(points.size() * k);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto nb = tree.knn(points[i], k, include_self ? static_cast<std::size_t>(-1) : i);
    for (std::size_t j = 0; j < k; ++j) {
      table.index[i * k + j] = nb[j].index;
      table.dist2[i * k + j] = nb[j].dist2;
    }
  }
  return table;
}

}  // namespace mugnet
