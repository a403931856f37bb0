#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mugnet/params.hpp"
#include "mugnet/partition.hpp"
#include "mugnet/tensor.hpp"

namespace mugnet {

// Edge lists of a superpoint graph in the form the conv layers consume.
struct GraphTopology {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  Tensor edge_features;  // E x kEdgeFeatureWidth; undefined when E == 0

  std::size_t num_edges() const { return src.size(); }

  static GraphTopology from_graph(const SuperpointGraph& graph);
};

// Mean-aggregation message passing:
//   out_i = h_i W_self + mean_{j : (i,j) in E} (h_j W_nbr + e_ij W_edge) + b
// Nodes without neighbors get only the self term.
struct GraphConvLayer {
  Tensor w_self;
  Tensor w_nbr;
  Tensor w_edge;  // optional
  Tensor bias;

  std::size_t in_width() const { return w_self.rows(); }
  std::size_t out_width() const { return w_self.cols(); }
};

GraphConvLayer make_graph_conv(ParamStore& store, Initializer& init, const std::string& name,
                               std::size_t in, std::size_t out, bool edge_features);

Tensor graph_conv(const Tensor& h, const GraphTopology& topo, const GraphConvLayer& layer);
Tensor graph_conv(const Tensor& h, const SuperpointGraph& graph, const GraphConvLayer& layer);

}  // namespace mugnet
