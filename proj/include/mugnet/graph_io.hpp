#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mugnet/features.hpp"
#include "mugnet/kv_config.hpp"
#include "mugnet/partition.hpp"
#include "mugnet/pointcloud.hpp"

namespace mugnet {

// Everything the network needs about one scan: the points, their geometric
// features and the superpoint graph over them.
struct ClusteredScene {
  PointCloud cloud;
  GeometricFeatures features;
  SuperpointGraph graph;
  std::vector<std::string> class_names;
};

// Feature and partition settings (keys features.k, partition.knn,
// partition.lambda, partition.elevation_weight).
struct ClusterSettings {
  std::size_t feature_k = kDefaultFeatureK;
  PartitionParams partition;

  static ClusterSettings from_config(const KvConfig& cfg);
  KvConfig to_config() const;
};

// Runs feature extraction and partitioning.
ClusteredScene cluster_scene(PointCloud cloud, std::size_t feature_k, const Partitioner& partitioner);
ClusteredScene cluster_scene(PointCloud cloud, const ClusterSettings& settings);

constexpr int kGraphFormatVersion = 1;

// Versioned JSON container ("mugnet-graph").
void write_scene(std::ostream& out, const ClusteredScene& scene);
ClusteredScene read_scene(std::istream& in);
void save_scene(const ClusteredScene& scene, const std::filesystem::path& path);
ClusteredScene load_scene(const std::filesystem::path& path);

}  // namespace mugnet
