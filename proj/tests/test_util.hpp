#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mugnet/graph_io.hpp"
#include "mugnet/model.hpp"
#include "mugnet/tensor.hpp"

namespace mugnet::testing {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

struct GradMismatch {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel = 0.0;
};

// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

// Central differences of the scalar `loss()` with respect to every element of
// `params`, compared against the gradients left by one backward pass. Returns
// the worst element per tensor, or everything above `tol`.
struct GradReport {
  double worst = 0.0;
  std::size_t checked = 0;
  std::vector<GradMismatch> failures;
};

inline GradReport check_gradients(const std::function<Tensor()>& loss, const std::vector<Tensor>& params,
                                  const std::vector<std::string>& names, double tol = 1e-4, double h = 1e-5) {
  for (auto p : params) p.zero_grad();
  loss().backward();
  GradReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor p = params[t];
    // A parameter the loss does not reach keeps an empty gradient.
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    analytic.resize(p.numel(), 0.0);
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      double plus, minus;
      {
        NoGradGuard guard;
        w[i] = orig + h;
        plus = loss().item();
        w[i] = orig - h;
        minus = loss().item();
        w[i] = orig;
      }
      const double numeric = (plus - minus) / (2 * h);
      const double rel = relative_error(analytic[i], numeric);
      report.worst = std::max(report.worst, rel);
      ++report.checked;
      if (!(rel < tol)) report.failures.push_back({names.empty() ? "" : names[t], i, analytic[i], numeric, rel});
    }
  }
  return report;
}

// Moves every value of `params` by up to `amount`. Zero-initialised biases
// otherwise sit exactly on relu kinks for rows whose inputs are all zero.
inline void jitter(const std::vector<Tensor>& params, std::mt19937_64& rng, double amount = 0.05) {
  std::uniform_real_distribution<double> u(-amount, amount);
  for (Tensor p : params) {
    for (auto& v : p.mutable_data()) v += u(rng);
  }
}

// A labeled point cloud of axis-aligned patches, one label per patch.
inline PointCloud patch_cloud(std::mt19937_64& rng, std::size_t patches, std::size_t per_patch, int classes) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloud cloud;
  cloud.labels.emplace();
  for (std::size_t p = 0; p < patches; ++p) {
    const double ox = 3.0 * static_cast<double>(p % 4), oy = 3.0 * static_cast<double>(p / 4);
    const int axis = static_cast<int>(p % 3);
    for (std::size_t i = 0; i < per_patch; ++i) {
      const double a = u(rng), b = u(rng), n = 0.01 * u(rng);
      Point3 q = axis == 0 ? Point3{ox + a, oy + b, n} : axis == 1 ? Point3{ox + a, oy + n, b} : Point3{ox + n, oy + a, b};
      cloud.positions.push_back(q);
      cloud.labels->push_back(static_cast<int>(p % static_cast<std::size_t>(classes)));
    }
  }
  return cloud;
}

// A small model configuration for tests that need many forward passes.
inline ModelConfig tiny_model_config(std::size_t classes = 3) {
  ModelConfig cfg;
  cfg.embedding.budgets = {6, 4, 2};
  cfg.embedding.hidden_width = 5;
  cfg.embedding.output_widths = {4, 3, 3};
  cfg.backbone.depth = 4;
  cfg.backbone.width = 4;
  cfg.head_hidden = 5;
  cfg.num_classes = classes;
  return cfg;
}

// Random scene input of `nodes` clusters with a random symmetric edge set.
inline SceneInput random_scene_input(std::mt19937_64& rng, const ModelConfig& cfg, std::size_t nodes,
                                     double edge_prob = 0.3) {
  SceneInput in;
  in.cluster_points = random_tensor(rng, {nodes * cfg.embedding.budgets[0], cfg.embedding.input_width});
  in.topology.num_nodes = nodes;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> feats;
  std::vector<std::vector<bool>> adj(nodes, std::vector<bool>(nodes, false));
  for (std::size_t i = 0; i < nodes; ++i) {
    for (std::size_t j = i + 1; j < nodes; ++j) adj[i][j] = adj[j][i] = u(rng) < edge_prob;
  }
  for (std::size_t i = 0; i < nodes; ++i) {
    for (std::size_t j = 0; j < nodes; ++j) {
      if (!adj[i][j]) continue;
      in.topology.src.push_back(i);
      in.topology.dst.push_back(j);
      for (std::size_t f = 0; f < kEdgeFeatureWidth; ++f) feats.push_back(u(rng) * 2 - 1);
    }
  }
  if (!in.topology.src.empty()) {
    in.topology.edge_features = Tensor::matrix(in.topology.src.size(), kEdgeFeatureWidth, std::move(feats));
  }
  for (std::size_t i = 0; i < nodes; ++i) {
    in.cluster_labels.push_back(static_cast<int>(rng() % cfg.num_classes));
    in.cluster_sizes.push_back(1.0 + static_cast<double>(rng() % 20));
  }
  in.num_points = nodes;
  return in;
}

// The same scene with node i renamed perm[i]; cluster rows and edges follow.
inline SceneInput permute_scene_input(const SceneInput& in, const std::vector<std::size_t>& perm,
                                      std::size_t budget) {
  const std::size_t n = in.num_clusters();
  const std::size_t w = in.cluster_points.cols();
  SceneInput out = in;
  std::vector<double> pts(in.cluster_points.numel());
  const auto src = in.cluster_points.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(src.begin() + i * budget * w, src.begin() + (i + 1) * budget * w, pts.begin() + perm[i] * budget * w);
    out.cluster_labels[perm[i]] = in.cluster_labels[i];
    out.cluster_sizes[perm[i]] = in.cluster_sizes[i];
  }
  out.cluster_points = Tensor::matrix(n * budget, w, std::move(pts));

  struct E {
    std::size_t s, d, k;
  };
  std::vector<E> edges;
  for (std::size_t k = 0; k < in.topology.num_edges(); ++k) {
    edges.push_back({perm[in.topology.src[k]], perm[in.topology.dst[k]], k});
  }
  std::sort(edges.begin(), edges.end(), [](const E& a, const E& b) { return std::tie(a.s, a.d) < std::tie(b.s, b.d); });
  out.topology.src.clear();
  out.topology.dst.clear();
  std::vector<double> feats;
  const auto f = in.topology.edge_features.defined() ? in.topology.edge_features.data() : std::span<const double>{};
  for (const auto& e : edges) {
    out.topology.src.push_back(e.s);
    out.topology.dst.push_back(e.d);
    feats.insert(feats.end(), f.begin() + e.k * kEdgeFeatureWidth, f.begin() + (e.k + 1) * kEdgeFeatureWidth);
  }
  if (!edges.empty()) out.topology.edge_features = Tensor::matrix(edges.size(), kEdgeFeatureWidth, std::move(feats));
  return out;
}

}  // namespace mugnet::testing
