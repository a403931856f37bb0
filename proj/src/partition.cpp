#include "mugnet/partition.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>

#include "mugnet/errors.hpp"
#include "mugnet/kdtree.hpp"

namespace mugnet {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // Returns the new root.
  std::size_t join(std::size_t a, std::size_t b) {
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return a;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> rank_;
};

std::array<double, kPointDescriptorWidth> descriptor(const PointGeometry& g) {
  return {g.linearity, g.planarity, g.scattering, g.verticality, g.elevation};
}

}  // namespace

std::vector<std::size_t> SuperpointGraph::point_to_cluster() const {
  std::vector<std::size_t> out(num_points, static_cast<std::size_t>(-1));
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (auto m : clusters[c].members) {
      if (m < num_points) out[m] = c;
    }
  }
  return out;
}

void SuperpointGraph::validate() const {
  std::vector<char> seen(num_points, 0);
  std::size_t total = 0;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (clusters[c].members.empty()) throw ContractError("cluster " + std::to_string(c) + " is empty");
    for (auto m : clusters[c].members) {
      if (m >= num_points) throw ContractError("cluster member " + std::to_string(m) + " out of range");
      if (seen[m]) throw ContractError("point " + std::to_string(m) + " belongs to two clusters");
      seen[m] = 1;
      ++total;
    }
  }
  if (total != num_points) throw ContractError("clusters do not cover every point");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& e : edges) {
    if (e.src >= clusters.size() || e.dst >= clusters.size()) {
      throw ContractError("edge endpoint out of range");
    }
    if (e.src == e.dst) throw ContractError("self loop on node " + std::to_string(e.src));
    pairs.emplace_back(e.src, e.dst);
  }
  std::sort(pairs.begin(), pairs.end());
  for (const auto& [a, b] : pairs) {
    if (!std::binary_search(pairs.begin(), pairs.end(), std::make_pair(b, a))) {
      throw ContractError("edge set is not symmetric");
    }
  }
}

std::array<double, kEdgeFeatureWidth> edge_feature_vector(const GraphEdge& e) {
  return {e.offset[0], e.offset[1], e.offset[2], e.log_size_ratio,
          std::log1p(static_cast<double>(e.boundary_pairs))};
}

SuperpointGraph build_graph(const PointCloud& cloud, const GeometricFeatures& feats,
                            std::vector<std::vector<std::size_t>> members,
                            const std::vector<std::pair<std::size_t, std::size_t>>& point_edges) {
  SuperpointGraph g;
  g.num_points = cloud.size();
  g.clusters.resize(members.size());
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& cl = g.clusters[c];
    cl.members = std::move(members[c]);
    std::sort(cl.members.begin(), cl.members.end());
    for (auto m : cl.members) {
      for (int d = 0; d < 3; ++d) cl.centroid[d] += cloud.positions[m][d];
      const auto f = descriptor(feats[m]);
      for (std::size_t d = 0; d < f.size(); ++d) cl.mean_features[d] += f[d];
    }
    const double n = static_cast<double>(cl.members.size());
    for (auto& v : cl.centroid) v /= n;
    for (auto& v : cl.mean_features) v /= n;
  }

  const auto owner = g.point_to_cluster();
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> boundary;
  for (const auto& [i, j] : point_edges) {
    const std::size_t a = owner[i], b = owner[j];
    if (a == b) continue;
    ++boundary[{std::min(a, b), std::max(a, b)}];
  }
  for (const auto& [key, count] : boundary) {
    for (const auto& [s, d] : {key, std::make_pair(key.second, key.first)}) {
      GraphEdge e;
      e.src = s;
      e.dst = d;
      for (int k = 0; k < 3; ++k) e.offset[k] = g.clusters[d].centroid[k] - g.clusters[s].centroid[k];
      e.log_size_ratio = std::log(static_cast<double>(g.clusters[d].size()) /
                                  static_cast<double>(g.clusters[s].size()));
      e.boundary_pairs = count;
      g.edges.push_back(e);
    }
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const GraphEdge& a, const GraphEdge& b) {
    return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
  });
  return g;
}

GreedyPartitioner::GreedyPartitioner(PartitionParams params) : params_(params) {
  if (params_.knn < 3) throw ParameterError("partition knn must be at least 3");
  if (!(params_.lambda >= 0.0)) throw ParameterError("partition lambda must be nonnegative");
}

SuperpointGraph GreedyPartitioner::partition(const PointCloud& cloud,
                                             const GeometricFeatures& feats) const {
  const std::size_t n = cloud.size();
  if (feats.size() != n) throw ContractError("feature count does not match point count");
  if (params_.knn > n - 1) {
    throw ParameterError("partition knn = " + std::to_string(params_.knn) + " needs more than " +
                         std::to_string(n) + " points");
  }

  constexpr std::size_t D = 5;
  std::vector<std::array<double, D>> f(n);
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = {feats[i].linearity, feats[i].planarity, feats[i].scattering, feats[i].verticality,
            feats[i].elevation * params_.elevation_weight};
  }
  auto dist2 = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t d = 0; d < D; ++d) s += (f[a][d] - f[b][d]) * (f[a][d] - f[b][d]);
    return s;
  };

  const KnnTable table = knn_table(cloud.positions, params_.knn, false);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n * params_.knn);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto j : table.row(i)) pairs.emplace_back(std::min(i, j), std::max(i, j));
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  double sigma2 = 0.0;
  for (const auto& [a, b] : pairs) sigma2 += dist2(a, b);
  sigma2 = pairs.empty() ? 1.0 : sigma2 / static_cast<double>(pairs.size());
  if (!(sigma2 > 0.0)) sigma2 = 1.0;

  // Per-root running moments for O(D) merged-variance evaluation.
  std::vector<double> count(n, 1.0);
  std::vector<std::array<double, D>> sum(f), sumsq(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < D; ++d) sumsq[i][d] = f[i][d] * f[i][d];
  }
  auto merged_variance = [&](std::size_t ra, std::size_t rb) {
    const double cnt = count[ra] + count[rb];
    double var = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      const double mean = (sum[ra][d] + sum[rb][d]) / cnt;
      var += std::max(0.0, (sumsq[ra][d] + sumsq[rb][d]) / cnt - mean * mean);
    }
    return var / static_cast<double>(D);
  };

  // Candidate merges keyed by merged variance, smallest first. For two single
  // points that is |f_a - f_b|^2 / (4 D), so the initial order is the order of
  // decreasing exp(-d^2 / sigma^2) with ties broken by the index pair. Keys go
  // stale as clusters grow; a popped candidate is re-keyed if its clusters
  // changed. The run stops at the first up-to-date candidate at or above the
  // threshold, so a smaller lambda always stops on a prefix of a larger
  // lambda's merge sequence.
  struct Candidate {
    double cost;
    std::size_t a, b;
    bool operator>(const Candidate& o) const { return std::tie(cost, a, b) > std::tie(o.cost, o.a, o.b); }
  };
  std::vector<Candidate> initial;
  initial.reserve(pairs.size());
  for (const auto& [a, b] : pairs) initial.push_back({merged_variance(a, b), a, b});
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap(std::greater<>{},
                                                                               std::move(initial));
  const double threshold = params_.lambda * sigma2;
  DisjointSets sets(n);
  while (!heap.empty()) {
    const Candidate c = heap.top();
    heap.pop();
    const std::size_t ra = sets.find(c.a), rb = sets.find(c.b);
    if (ra == rb) continue;
    const double cost = merged_variance(ra, rb);
    if (cost != c.cost) {
      heap.push({cost, c.a, c.b});
      continue;
    }
    if (!(cost < threshold)) break;
    const std::size_t root = sets.join(ra, rb);
    const std::size_t other = root == ra ? rb : ra;
    count[root] += count[other];
    for (std::size_t d = 0; d < D; ++d) {
      sum[root][d] += sum[other][d];
      sumsq[root][d] += sumsq[other][d];
    }
  }

  // Clusters numbered by their smallest member.
  std::vector<std::size_t> cluster_of_root(n, static_cast<std::size_t>(-1));
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = sets.find(i);
    if (cluster_of_root[r] == static_cast<std::size_t>(-1)) {
      cluster_of_root[r] = members.size();
      members.emplace_back();
    }
    members[cluster_of_root[r]].push_back(i);
  }
  return build_graph(cloud, feats, std::move(members), pairs);
}

SuperpointGraph partition(const PointCloud& cloud, const GeometricFeatures& feats, std::size_t knn,
                          double lambda) {
  PartitionParams p;
  p.knn = knn;
  p.lambda = lambda;
  return GreedyPartitioner(p).partition(cloud, feats);
}

std::vector<int> cluster_majority_labels(const SuperpointGraph& graph, const std::vector<int>& labels) {
  std::vector<int> out(graph.num_nodes(), 0);
  std::map<int, std::size_t> hist;
  for (std::size_t c = 0; c < graph.num_nodes(); ++c) {
    hist.clear();
    for (auto m : graph.clusters[c].members) ++hist[labels.at(m)];
    std::size_t best = 0;
    for (const auto& [label, count] : hist) {
      if (count > best) {
        best = count;
        out[c] = label;
      }
    }
  }
  return out;
}

PartitionQuality purity(const SuperpointGraph& graph, const PointCloud& cloud) {
  if (!cloud.labels) throw ContractError("purity needs a labeled cloud");
  if (cloud.size() != graph.num_points) throw ContractError("graph and cloud sizes differ");
  PartitionQuality q;
  q.cluster_count = graph.num_nodes();
  q.mean_cluster_size = q.cluster_count ? static_cast<double>(graph.num_points) /
                                              static_cast<double>(q.cluster_count)
                                        : 0.0;
  const auto majority = cluster_majority_labels(graph, *cloud.labels);
  std::size_t pure_points = 0;
  for (std::size_t c = 0; c < graph.num_nodes(); ++c) {
    std::size_t agree = 0;
    for (auto m : graph.clusters[c].members) agree += (*cloud.labels)[m] == majority[c];
    q.cluster_purity.push_back(static_cast<double>(agree) /
                               static_cast<double>(graph.clusters[c].size()));
    pure_points += agree;
  }
  q.mean_purity = graph.num_points ? static_cast<double>(pure_points) /
                                         static_cast<double>(graph.num_points)
                                   : 0.0;
  return q;
}

double compression_ratio(const SuperpointGraph& graph) {
  if (graph.num_nodes() == 0) return 0.0;
  return static_cast<double>(graph.num_points) / static_cast<double>(graph.num_nodes());
}

}  // namespace mugnet
