#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mugnet/embedding.hpp"
#include "mugnet/graph_conv.hpp"
#include "mugnet/graph_io.hpp"
#include "mugnet/kv_config.hpp"
#include "mugnet/params.hpp"
#include "mugnet/tensor.hpp"

namespace mugnet {

constexpr std::size_t kFusionLevels = 4;
constexpr double kFusionEps = 1e-4;

// ---- backbone ----

struct BackboneConfig {
  std::size_t depth = 4;
  std::size_t width = 32;
  // 1-based block indices exposed as resolution levels; empty means the last
  // min(4, depth) blocks.
  std::vector<std::size_t> taps;
  // Adds the first block's output into the last block (depth >= 3).
  bool long_residual = true;

  std::vector<std::size_t> resolved_taps() const;
  void validate() const;
};

struct BackboneBlock {
  GraphConvLayer conv;
  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;
};

struct BackboneOutput {
  std::vector<Tensor> taps;
  Tensor concat;  // taps side by side
};

// Block i computes relu(batch_norm(graph_conv(h))) and, from the second block
// on, adds the previous block's output.
BackboneOutput backbone_forward(const Tensor& h0, const GraphTopology& topo, const BackboneConfig& cfg,
                                std::vector<BackboneBlock>& blocks, BatchNormMode mode);

// ---- fusion ----

enum class FusionMode { None, PlainPyramid, BidirectionalWeighted };

std::string fusion_mode_name(FusionMode mode);
FusionMode parse_fusion_mode(const std::string& text);

// One fusion network over four levels (index 0 = level 1, the shallowest).
//   plain pyramid:  out_4 = GC(in_4), out_l = GC(in_l + out_{l+1})
//   bidirectional:  top-down mids for levels 3 and 2, then bottom-up outputs
//     out_1 = GC(fuse(in_1, mid_2))
//     out_l = GC(fuse(in_l, mid_l, out_{l-1}))   l = 2, 3
//     out_4 = GC(fuse(in_4, out_3))
//   with mid_3 = GC(fuse(in_3, in_4)), mid_2 = GC(fuse(in_2, mid_3)) and
//   fuse(x...) = sum relu(w_k) x_k / (sum relu(w_k) + eps).
struct FusionNetwork {
  std::array<GraphConvLayer, kFusionLevels> mid;  // defined for levels 2 and 3
  std::array<GraphConvLayer, kFusionLevels> out;
  std::array<Tensor, kFusionLevels> mid_weights;
  std::array<Tensor, kFusionLevels> out_weights;
};

FusionNetwork make_fusion_network(ParamStore& store, Initializer& init, const std::string& prefix,
                                  std::size_t width, FusionMode mode, bool edge_features);

// sum_k relu(w_k) * inputs_k / (sum_k relu(w_k) + kFusionEps)
Tensor weighted_fuse(const std::vector<Tensor>& inputs, const Tensor& weights);

std::vector<Tensor> bidirectional_fuse(const std::vector<Tensor>& levels, const GraphTopology& topo,
                                       const FusionNetwork& net, FusionMode mode);

// ---- head ----

struct SegmentHead {
  Linear hidden;
  Linear output;
};

// relu(concat W1 + b1) W2 + b2 over [backbone concat, fused levels...].
Tensor segment_head(const Tensor& backbone_concat, const std::vector<Tensor>& fused, const SegmentHead& head);

// Argmax per row, lowest class on ties.
std::vector<int> predict_clusters(const Tensor& logits);
std::vector<int> predict_points(const Tensor& logits, const SuperpointGraph& graph);

// ---- full network ----

struct ModelConfig {
  EmbeddingConfig embedding;
  BackboneConfig backbone;
  FusionMode fusion = FusionMode::BidirectionalWeighted;
  std::size_t stack = 1;  // fusion networks applied in sequence
  std::size_t head_hidden = 64;
  std::size_t num_classes = 3;
  bool edge_features = true;
  bool use_color = false;

  void validate() const;
  KvConfig to_config() const;
  // Reads the keys written by to_config(); missing keys keep their defaults.
  static ModelConfig from_config(const KvConfig& cfg);
  static const std::vector<std::string>& config_keys();
};

// Per-scene network inputs, computed once and reused every epoch.
struct SceneInput {
  Tensor cluster_points;  // (K * n1) x F_in canonical samples
  GraphTopology topology;
  std::vector<int> cluster_labels;     // majority labels, empty if unlabeled
  std::vector<double> cluster_sizes;
  std::size_t num_points = 0;

  std::size_t num_clusters() const { return topology.num_nodes; }
};

SceneInput prepare_scene(const ClusteredScene& scene, const ModelConfig& cfg);

class MuGNet {
 public:
  struct Trace {
    Tensor embedding;
    BackboneOutput backbone;
    std::vector<Tensor> fused;  // last fusion network's outputs
    Tensor logits;
  };

  MuGNet(ModelConfig cfg, std::uint64_t seed);
  MuGNet(const MuGNet&) = delete;
  MuGNet& operator=(const MuGNet&) = delete;
  MuGNet(MuGNet&&) = default;
  MuGNet& operator=(MuGNet&&) = default;

  // Cluster logits, K x num_classes.
  Tensor forward(const SceneInput& input, BatchNormMode mode);
  Trace forward_trace(const SceneInput& input, BatchNormMode mode);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  EmbeddingParams& embedding() { return embedding_; }
  std::vector<BackboneBlock>& blocks() { return blocks_; }
  std::vector<FusionNetwork>& fusion() { return fusion_; }
  SegmentHead& head() { return head_; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  EmbeddingParams embedding_;
  std::vector<BackboneBlock> blocks_;
  std::vector<FusionNetwork> fusion_;
  SegmentHead head_;
};

}  // namespace mugnet
