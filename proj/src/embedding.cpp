#include "mugnet/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mugnet/errors.hpp"

namespace mugnet {

void EmbeddingConfig::validate() const {
  if (input_width == 0) throw ConfigError("embedding input width must be positive");
  if (!(budgets[0] >= budgets[1] && budgets[1] >= budgets[2] && budgets[2] >= 1)) {
    throw ConfigError("embedding budgets must satisfy n1 >= n2 >= n3 >= 1");
  }
  if (hidden_width == 0) throw ConfigError("embedding hidden width must be positive");
  for (auto w : output_widths) {
    if (w == 0) throw ConfigError("embedding output widths must be positive");
  }
}

namespace {

// Xavier-uniform mixer mapping `from` points to `to` points, stored to x from.
Tensor make_mixer(Initializer& init, std::size_t from, std::size_t to) {
  const double a = std::sqrt(6.0 / static_cast<double>(from + to));
  return init.uniform_matrix(to, from, -a, a);
}

}  // namespace

EmbeddingParams make_embedding_params(const EmbeddingConfig& cfg, ParamStore& store, Initializer& init) {
  cfg.validate();
  EmbeddingParams p;
  p.down_mid = store.add("embed.down_mid", make_mixer(init, cfg.budgets[0], cfg.budgets[1]));
  p.down_coarse = store.add("embed.down_coarse", make_mixer(init, cfg.budgets[1], cfg.budgets[2]));
  for (std::size_t r = 0; r < 3; ++r) {
    const std::string name = "embed.res" + std::to_string(r + 1);
    p.mlps[r].first = make_linear(store, init, name + ".fc1", cfg.input_width, cfg.hidden_width);
    p.mlps[r].second = make_linear(store, init, name + ".fc2", cfg.hidden_width, cfg.output_widths[r]);
  }
  return p;
}

std::vector<double> cluster_point_inputs(const ClusteredScene& scene, std::size_t cluster, bool use_color) {
  const auto& cl = scene.graph.clusters.at(cluster);
  if (use_color && !scene.cloud.colors) throw ContractError("scene has no colors");
  const std::size_t width = point_input_width(use_color);
  std::vector<double> out;
  out.reserve(cl.size() * width);
  for (auto m : cl.members) {
    const auto& p = scene.cloud.positions[m];
    const auto& g = scene.features[m];
    out.insert(out.end(), {p[0] - cl.centroid[0], p[1] - cl.centroid[1], p[2] - cl.centroid[2],
                           g.linearity, g.planarity, g.scattering, g.verticality, g.elevation});
    if (use_color) {
      const auto& c = (*scene.cloud.colors)[m];
      out.insert(out.end(), c.begin(), c.end());
    }
  }
  return out;
}

std::vector<double> canonical_sample(std::span<const double> rows, std::size_t width, std::size_t budget) {
  if (width < 3) throw ContractError("point rows need at least the three offset columns");
  if (rows.empty() || rows.size() % width != 0) {
    throw ContractError("point block is empty or not a multiple of the row width");
  }
  if (budget == 0) throw ContractError("sample budget must be positive");
  const std::size_t m = rows.size() / width;
  auto row = [&](std::size_t i) { return rows.data() + i * width; };
  auto radius2 = [&](std::size_t i) {
    const double* r = row(i);
    return r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
  };

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> rad(m);
  for (std::size_t i = 0; i < m; ++i) rad[i] = radius2(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rad[a] != rad[b]) return rad[a] < rad[b];
    return std::lexicographical_compare(row(a), row(a) + width, row(b), row(b) + width);
  });

  // `chosen` holds positions into `order`, so ties resolve canonically.
  std::vector<std::size_t> chosen;
  if (m <= budget) {
    chosen.resize(m);
    std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  } else {
    std::vector<double> min_d(m, std::numeric_limits<double>::infinity());
    std::vector<char> taken(m, 0);
    std::size_t next = m - 1;  // farthest from the centroid
    for (std::size_t s = 0; s < budget; ++s) {
      chosen.push_back(next);
      taken[next] = 1;
      const double* c = row(order[next]);
      std::size_t best = m;
      for (std::size_t pos = 0; pos < m; ++pos) {
        if (taken[pos]) continue;
        const double* r = row(order[pos]);
        const double d = (r[0] - c[0]) * (r[0] - c[0]) + (r[1] - c[1]) * (r[1] - c[1]) +
                         (r[2] - c[2]) * (r[2] - c[2]);
        min_d[pos] = std::min(min_d[pos], d);
        if (best == m || min_d[pos] > min_d[best]) best = pos;
      }
      next = best;
    }
    std::sort(chosen.begin(), chosen.end());
  }

  std::vector<double> out;
  out.reserve(budget * width);
  for (std::size_t s = 0; s < budget; ++s) {
    const double* r = row(order[chosen[s % chosen.size()]]);
    out.insert(out.end(), r, r + width);
  }
  return out;
}

Tensor prepare_cluster_inputs(const ClusteredScene& scene, const EmbeddingConfig& cfg, bool use_color) {
  const std::size_t width = point_input_width(use_color);
  if (width != cfg.input_width) {
    throw ContractError("embedding expects " + std::to_string(cfg.input_width) +
                        " input features, scene provides " + std::to_string(width));
  }
  const std::size_t k = scene.graph.num_nodes();
  if (k == 0) throw ContractError("scene graph has no clusters");
  std::vector<double> stacked;
  stacked.reserve(k * cfg.budgets[0] * width);
  for (std::size_t c = 0; c < k; ++c) {
    const auto rows = cluster_point_inputs(scene, c, use_color);
    const auto sample = canonical_sample(rows, width, cfg.budgets[0]);
    stacked.insert(stacked.end(), sample.begin(), sample.end());
  }
  return Tensor::matrix(k * cfg.budgets[0], width, std::move(stacked));
}

Tensor embed_stacked(const Tensor& stacked, const EmbeddingConfig& cfg, const EmbeddingParams& params) {
  if (stacked.rank() != 2 || stacked.cols() != cfg.input_width) {
    throw ContractError("embedding expects rows of width " + std::to_string(cfg.input_width) + ", got " +
                        shape_str(stacked.shape()));
  }
  if (stacked.rows() % cfg.budgets[0] != 0) {
    throw ContractError("stacked point rows are not a multiple of the point budget");
  }
  const Tensor fine = stacked;
  const Tensor mid = mix_rows(params.down_mid, fine);
  const Tensor coarse = mix_rows(params.down_coarse, mid);
  return concat_cols({segment_max(params.mlps[0].forward(fine), cfg.budgets[0]),
                      segment_max(params.mlps[1].forward(mid), cfg.budgets[1]),
                      segment_max(params.mlps[2].forward(coarse), cfg.budgets[2])});
}

Tensor embed_cluster(const Tensor& points, const EmbeddingConfig& cfg, const EmbeddingParams& params) {
  if (points.rank() != 2 || points.cols() != cfg.input_width) {
    throw ContractError("embed_cluster expects m x " + std::to_string(cfg.input_width) + " inputs, got " +
                        shape_str(points.shape()));
  }
  auto sample = canonical_sample(points.data(), points.cols(), cfg.budgets[0]);
  return embed_stacked(Tensor::matrix(cfg.budgets[0], points.cols(), std::move(sample)), cfg, params);
}

Tensor embed_graph(const ClusteredScene& scene, const EmbeddingConfig& cfg, const EmbeddingParams& params,
                   bool use_color) {
  return embed_stacked(prepare_cluster_inputs(scene, cfg, use_color), cfg, params);
}

}  // namespace mugnet
