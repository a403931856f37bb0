#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "mugnet/graph_io.hpp"
#include "mugnet/params.hpp"
#include "mugnet/tensor.hpp"

namespace mugnet {

// Per-point inputs: centroid offset (3), linearity, planarity, scattering,
// verticality, elevation, and rgb when colors are used.
constexpr std::size_t kPointInputWidth = 8;
constexpr std::size_t kPointInputWidthColor = 11;

inline std::size_t point_input_width(bool use_color) {
  return use_color ? kPointInputWidthColor : kPointInputWidth;
}

struct EmbeddingConfig {
  std::size_t input_width = kPointInputWidth;
  std::array<std::size_t, 3> budgets{64, 32, 16};      // points per resolution
  std::size_t hidden_width = 32;                        // first MLP layer
  std::array<std::size_t, 3> output_widths{64, 64, 64}; // pooled width per resolution

  std::size_t output_width() const {
    return output_widths[0] + output_widths[1] + output_widths[2];
  }
  void validate() const;
};

// Two-layer shared per-point MLP with relu after each layer.
struct PointMlp {
  Linear first;
  Linear second;

  Tensor forward(const Tensor& x) const { return relu(second.forward(relu(first.forward(x)))); }
};

struct EmbeddingParams {
  Tensor down_mid;     // budgets[1] x budgets[0] mixing across points
  Tensor down_coarse;  // budgets[2] x budgets[1]
  std::array<PointMlp, 3> mlps;
};

EmbeddingParams make_embedding_params(const EmbeddingConfig& cfg, ParamStore& store, Initializer& init);

// m x F point inputs of one cluster, row-major.
std::vector<double> cluster_point_inputs(const ClusteredScene& scene, std::size_t cluster, bool use_color);

// Reduces or pads m x F rows to exactly `budget` rows in an order that depends
// only on the set of rows: farthest point sampling when m > budget, cyclic
// replication when m < budget, and rows ordered by distance to the centroid
// (lexicographic on the full row for ties).
std::vector<double> canonical_sample(std::span<const double> rows, std::size_t width, std::size_t budget);

// Canonical samples of every cluster stacked into (K * budgets[0]) x F.
Tensor prepare_cluster_inputs(const ClusteredScene& scene, const EmbeddingConfig& cfg, bool use_color);

// K x F_emb embeddings from stacked canonical samples.
Tensor embed_stacked(const Tensor& stacked, const EmbeddingConfig& cfg, const EmbeddingParams& params);

// 1 x F_emb embedding of a single cluster given its m x F_in point inputs.
Tensor embed_cluster(const Tensor& points, const EmbeddingConfig& cfg, const EmbeddingParams& params);

// K x F_emb, row i embedding cluster i.
Tensor embed_graph(const ClusteredScene& scene, const EmbeddingConfig& cfg, const EmbeddingParams& params,
                   bool use_color);

}  // namespace mugnet
