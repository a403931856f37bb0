#include "mugnet/graph_conv.hpp"

#include "mugnet/errors.hpp"

namespace mugnet {

GraphTopology GraphTopology::from_graph(const SuperpointGraph& graph) {
  GraphTopology t;
  t.num_nodes = graph.num_nodes();
  std::vector<double> feats;
  feats.reserve(graph.edges.size() * kEdgeFeatureWidth);
  for (const auto& e : graph.edges) {
    t.src.push_back(e.src);
    t.dst.push_back(e.dst);
    const auto f = edge_feature_vector(e);
    feats.insert(feats.end(), f.begin(), f.end());
  }
  if (!graph.edges.empty()) {
    t.edge_features = Tensor::matrix(graph.edges.size(), kEdgeFeatureWidth, std::move(feats));
  }
  return t;
}

GraphConvLayer make_graph_conv(ParamStore& store, Initializer& init, const std::string& name,
                               std::size_t in, std::size_t out, bool edge_features) {
  GraphConvLayer l;
  l.w_self = store.add(name + ".w_self", init.xavier(in, out));
  l.w_nbr = store.add(name + ".w_nbr", init.xavier(in, out));
  if (edge_features) l.w_edge = store.add(name + ".w_edge", init.xavier(kEdgeFeatureWidth, out));
  l.bias = store.add(name + ".bias", Tensor::zeros({out}));
  return l;
}

Tensor graph_conv(const Tensor& h, const GraphTopology& topo, const GraphConvLayer& layer) {
  if (h.rank() != 2 || h.rows() != topo.num_nodes) {
    throw ContractError("graph_conv: features " + shape_str(h.shape()) + " for a graph of " +
                        std::to_string(topo.num_nodes) + " nodes");
  }
  if (h.cols() != layer.in_width()) {
    throw ContractError("graph_conv: features " + shape_str(h.shape()) + " for a layer expecting width " +
                        std::to_string(layer.in_width()));
  }
  Tensor out = matmul(h, layer.w_self);
  if (topo.num_edges() > 0) {
    Tensor messages = gather_rows(matmul(h, layer.w_nbr), topo.dst);
    if (layer.w_edge.defined()) messages = add(messages, matmul(topo.edge_features, layer.w_edge));
    out = add(out, segment_mean(messages, topo.src, topo.num_nodes));
  }
  return add(out, layer.bias);
}

Tensor graph_conv(const Tensor& h, const SuperpointGraph& graph, const GraphConvLayer& layer) {
  return graph_conv(h, GraphTopology::from_graph(graph), layer);
}

}  // namespace mugnet
