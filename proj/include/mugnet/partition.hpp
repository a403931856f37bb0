#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "mugnet/features.hpp"
#include "mugnet/pointcloud.hpp"

namespace mugnet {

constexpr std::size_t kPointDescriptorWidth = 5;  // lin, plan, scat, vert, elevation

struct Cluster {
  std::vector<std::size_t> members;  // ascending point indices
  Point3 centroid{0, 0, 0};
  std::array<double, kPointDescriptorWidth> mean_features{};

  std::size_t size() const { return members.size(); }
};

// Directed edge src -> dst: dst is a neighbor of src and sends it messages.
struct GraphEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
  Point3 offset{0, 0, 0};       // centroid(dst) - centroid(src)
  double log_size_ratio = 0.0;  // log(|dst| / |src|)
  std::size_t boundary_pairs = 0;
};

constexpr std::size_t kEdgeFeatureWidth = 5;

// Clusters of a point cloud as graph nodes, adjacent clusters joined by a
// pair of opposite directed edges. Self loops are never stored.
struct SuperpointGraph {
  std::size_t num_points = 0;
  std::vector<Cluster> clusters;
  std::vector<GraphEdge> edges;  // sorted by (src, dst)

  std::size_t num_nodes() const { return clusters.size(); }
  std::vector<std::size_t> point_to_cluster() const;
  // Throws ContractError if clusters do not partition [0, num_points), an
  // edge is out of range or a self loop, or the edge set is not symmetric.
  void validate() const;
};

// [dx, dy, dz, log size ratio, log(1 + boundary pairs)] per edge.
std::array<double, kEdgeFeatureWidth> edge_feature_vector(const GraphEdge& e);

// Recomputes centroids, mean features and edges from cluster memberships and
// the point-level k-NN adjacency used to partition.
SuperpointGraph build_graph(const PointCloud& cloud, const GeometricFeatures& feats,
                            std::vector<std::vector<std::size_t>> members,
                            const std::vector<std::pair<std::size_t, std::size_t>>& point_edges);

struct PartitionParams {
  std::size_t knn = 10;
  double lambda = 0.07;
  // Weight of elevation (per meter) next to the four dimensionality features.
  double elevation_weight = 0.0;
};

// Pluggable partition stage; a learned clusterer can implement the same
// interface.
class Partitioner {
 public:
  virtual ~Partitioner() = default;
  virtual SuperpointGraph partition(const PointCloud& cloud, const GeometricFeatures& feats) const = 0;
};

// Greedy variance-bounded merging over the point k-NN graph: edges are visited
// by decreasing exp(-|f_i - f_j|^2 / sigma^2) (ties by index pair) and two
// clusters are joined while the merged per-dimension feature variance stays
// below lambda * sigma^2, sigma^2 being the mean squared feature distance over
// all k-NN edges.
class GreedyPartitioner final : public Partitioner {
 public:
  explicit GreedyPartitioner(PartitionParams params);
  SuperpointGraph partition(const PointCloud& cloud, const GeometricFeatures& feats) const override;
  const PartitionParams& params() const { return params_; }

 private:
  PartitionParams params_;
};

SuperpointGraph partition(const PointCloud& cloud, const GeometricFeatures& feats,
                          std::size_t knn, double lambda);

struct PartitionQuality {
  std::size_t cluster_count = 0;
  double mean_cluster_size = 0.0;
  std::vector<double> cluster_purity;
  double mean_purity = 0.0;  // weighted by cluster size
};

// Throws ContractError if the cloud carries no labels.
PartitionQuality purity(const SuperpointGraph& graph, const PointCloud& cloud);

double compression_ratio(const SuperpointGraph& graph);

// Majority label per cluster (lowest label on ties).
std::vector<int> cluster_majority_labels(const SuperpointGraph& graph, const std::vector<int>& labels);

}  // namespace mugnet
