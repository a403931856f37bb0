#include "mugnet/graph_io.hpp"

#include <fstream>

#include <json.hpp>

#include "mugnet/errors.hpp"

namespace mugnet {

using nlohmann::json;

ClusteredScene cluster_scene(PointCloud cloud, std::size_t feature_k, const Partitioner& partitioner) {
  ClusteredScene scene;
  scene.features = geometric_features(cloud, feature_k);
  scene.graph = partitioner.partition(cloud, scene.features);
  scene.cloud = std::move(cloud);
  return scene;
}

ClusteredScene cluster_scene(PointCloud cloud, const ClusterSettings& settings) {
  return cluster_scene(std::move(cloud), settings.feature_k, GreedyPartitioner(settings.partition));
}

ClusterSettings ClusterSettings::from_config(const KvConfig& cfg) {
  ClusterSettings s;
  const long k = cfg.get_int("features.k", static_cast<long>(s.feature_k));
  const long knn = cfg.get_int("partition.knn", static_cast<long>(s.partition.knn));
  if (k < 0 || knn < 0) throw ConfigError("features.k and partition.knn must be nonnegative");
  s.feature_k = static_cast<std::size_t>(k);
  s.partition.knn = static_cast<std::size_t>(knn);
  s.partition.lambda = cfg.get_double("partition.lambda", s.partition.lambda);
  s.partition.elevation_weight = cfg.get_double("partition.elevation_weight", s.partition.elevation_weight);
  return s;
}

KvConfig ClusterSettings::to_config() const {
  KvConfig c;
  c.add("features.k", std::to_string(feature_k));
  c.add("partition.knn", std::to_string(partition.knn));
  c.add("partition.lambda", format_double(partition.lambda));
  c.add("partition.elevation_weight", format_double(partition.elevation_weight));
  return c;
}

namespace {

json points_json(const std::vector<Point3>& pts) {
  std::vector<double> flat;
  flat.reserve(pts.size() * 3);
  for (const auto& p : pts) flat.insert(flat.end(), p.begin(), p.end());
  return flat;
}

std::vector<Point3> points_from(const json& j, std::size_t n, const char* what) {
  const auto flat = j.get<std::vector<double>>();
  if (flat.size() != 3 * n) throw ValidationError(std::string(what) + " has the wrong length");
  std::vector<Point3> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]};
  return out;
}

}  // namespace

void write_scene(std::ostream& out, const ClusteredScene& scene) {
  json j;
  j["format"] = "mugnet-graph";
  j["version"] = kGraphFormatVersion;
  j["num_points"] = scene.cloud.size();
  j["class_names"] = scene.class_names;
  j["positions"] = points_json(scene.cloud.positions);
  if (scene.cloud.colors) j["colors"] = points_json(*scene.cloud.colors);
  if (scene.cloud.labels) j["labels"] = *scene.cloud.labels;
  std::vector<double> feats;
  feats.reserve(scene.features.size() * kPointDescriptorWidth);
  for (const auto& g : scene.features) {
    feats.insert(feats.end(), {g.linearity, g.planarity, g.scattering, g.verticality, g.elevation});
  }
  j["features"] = feats;
  json clusters = json::array();
  for (const auto& c : scene.graph.clusters) {
    clusters.push_back({{"members", c.members},
                        {"centroid", c.centroid},
                        {"mean_features", c.mean_features}});
  }
  j["clusters"] = clusters;
  json edges = json::array();
  for (const auto& e : scene.graph.edges) {
    edges.push_back({{"src", e.src},
                     {"dst", e.dst},
                     {"offset", e.offset},
                     {"log_size_ratio", e.log_size_ratio},
                     {"boundary_pairs", e.boundary_pairs}});
  }
  j["edges"] = edges;
  out << j.dump() << '\n';
}

ClusteredScene read_scene(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("graph file is not valid JSON: ") + e.what(), 1);
  }
  try {
    if (j.at("format") != "mugnet-graph") throw ValidationError("not a mugnet graph file");
    const int version = j.at("version").get<int>();
    if (version != kGraphFormatVersion) {
      throw ValidationError("unsupported graph format version " + std::to_string(version));
    }
    ClusteredScene s;
    const auto n = j.at("num_points").get<std::size_t>();
    s.class_names = j.value("class_names", std::vector<std::string>{});
    s.cloud.positions = points_from(j.at("positions"), n, "positions");
    if (j.contains("colors")) s.cloud.colors = points_from(j["colors"], n, "colors");
    if (j.contains("labels")) s.cloud.labels = j["labels"].get<std::vector<int>>();
    const auto feats = j.at("features").get<std::vector<double>>();
    if (feats.size() != n * kPointDescriptorWidth) throw ValidationError("features have the wrong length");
    s.features.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double* f = feats.data() + i * kPointDescriptorWidth;
      s.features[i] = {f[0], f[1], f[2], f[3], f[4]};
    }
    s.graph.num_points = n;
    for (const auto& c : j.at("clusters")) {
      Cluster cl;
      cl.members = c.at("members").get<std::vector<std::size_t>>();
      cl.centroid = c.at("centroid").get<Point3>();
      cl.mean_features = c.at("mean_features").get<std::array<double, kPointDescriptorWidth>>();
      s.graph.clusters.push_back(std::move(cl));
    }
    for (const auto& e : j.at("edges")) {
      GraphEdge ge;
      ge.src = e.at("src").get<std::size_t>();
      ge.dst = e.at("dst").get<std::size_t>();
      ge.offset = e.at("offset").get<Point3>();
      ge.log_size_ratio = e.at("log_size_ratio").get<double>();
      ge.boundary_pairs = e.at("boundary_pairs").get<std::size_t>();
      s.graph.edges.push_back(ge);
    }
    s.cloud.validate();
    s.graph.validate();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed graph file: ") + e.what());
  } catch (const ContractError& e) {
    throw ValidationError(std::string("inconsistent graph file: ") + e.what());
  }
}

void save_scene(const ClusteredScene& scene, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write graph file " + path.string());
  write_scene(out, scene);
  if (!out) throw IoError("write failed for " + path.string());
}

ClusteredScene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open graph file " + path.string());
  return read_scene(in);
}

}  // namespace mugnet
