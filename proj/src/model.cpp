#include "mugnet/model.hpp"

#include <algorithm>

#include "mugnet/errors.hpp"

namespace mugnet {

// ---- backbone ----

std::vector<std::size_t> BackboneConfig::resolved_taps() const {
  if (!taps.empty()) return taps;
  std::vector<std::size_t> out;
  const std::size_t count = std::min(kFusionLevels, depth);
  for (std::size_t i = depth - count + 1; i <= depth; ++i) out.push_back(i);
  return out;
}

void BackboneConfig::validate() const {
  if (depth < 1) throw ConfigError("backbone depth must be at least 1");
  if (width < 1) throw ConfigError("backbone width must be positive");
  for (auto t : taps) {
    if (t < 1 || t > depth) {
      throw ConfigError("backbone tap " + std::to_string(t) + " outside [1, " + std::to_string(depth) + "]");
    }
  }
}

BackboneOutput backbone_forward(const Tensor& h0, const GraphTopology& topo, const BackboneConfig& cfg,
                                std::vector<BackboneBlock>& blocks, BatchNormMode mode) {
  cfg.validate();
  if (blocks.size() != cfg.depth) throw ConfigError("backbone has the wrong number of blocks");
  if (blocks.front().conv.in_width() != h0.cols()) {
    throw ContractError("backbone input width " + std::to_string(h0.cols()) + " does not match first block " +
                        std::to_string(blocks.front().conv.in_width()));
  }
  std::vector<Tensor> outs;
  outs.reserve(cfg.depth);
  Tensor h = h0;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    auto& b = blocks[i];
    Tensor z = relu(batch_norm(graph_conv(h, topo, b.conv), b.gamma, b.beta, b.stats, mode));
    if (i > 0) z = add(z, outs.back());
    if (cfg.long_residual && cfg.depth >= 3 && i + 1 == cfg.depth) z = add(z, outs.front());
    outs.push_back(z);
    h = z;
  }
  BackboneOutput result;
  for (auto t : cfg.resolved_taps()) result.taps.push_back(outs[t - 1]);
  result.concat = result.taps.size() == 1 ? result.taps.front() : concat_cols(result.taps);
  return result;
}

// ---- fusion ----

std::string fusion_mode_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::None: return "none";
    case FusionMode::PlainPyramid: return "pyramid";
    case FusionMode::BidirectionalWeighted: return "bidirectional";
  }
  return "none";
}

FusionMode parse_fusion_mode(const std::string& text) {
  if (text == "none") return FusionMode::None;
  if (text == "pyramid" || text == "plain-pyramid") return FusionMode::PlainPyramid;
  if (text == "bidirectional" || text == "bidirectional-weighted") return FusionMode::BidirectionalWeighted;
  throw ConfigError("unknown fusion mode '" + text + "'");
}

FusionNetwork make_fusion_network(ParamStore& store, Initializer& init, const std::string& prefix,
                                  std::size_t width, FusionMode mode, bool edge_features) {
  FusionNetwork net;
  if (mode == FusionMode::None) return net;
  for (std::size_t l = kFusionLevels; l-- > 0;) {
    const std::string level = std::to_string(l + 1);
    if (mode == FusionMode::BidirectionalWeighted && (l == 1 || l == 2)) {
      net.mid[l] = make_graph_conv(store, init, prefix + ".mid" + level, width, width, edge_features);
      net.mid_weights[l] = store.add(prefix + ".mid" + level + ".w", Tensor::full({2}, 1.0));
    }
  }
  for (std::size_t l = 0; l < kFusionLevels; ++l) {
    const std::string level = std::to_string(l + 1);
    net.out[l] = make_graph_conv(store, init, prefix + ".out" + level, width, width, edge_features);
    if (mode == FusionMode::BidirectionalWeighted) {
      const std::size_t inputs = (l == 0 || l + 1 == kFusionLevels) ? 2 : 3;
      net.out_weights[l] = store.add(prefix + ".out" + level + ".w", Tensor::full({inputs}, 1.0));
    }
  }
  return net;
}

Tensor weighted_fuse(const std::vector<Tensor>& inputs, const Tensor& weights) {
  if (inputs.empty()) throw ContractError("weighted_fuse: no inputs");
  if (weights.numel() != inputs.size()) {
    throw ContractError("weighted_fuse: " + std::to_string(weights.numel()) + " weights for " +
                        std::to_string(inputs.size()) + " inputs");
  }
  const Tensor w = relu(weights);
  Tensor numerator;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (inputs[k].shape() != inputs.front().shape()) {
      throw ContractError("weighted_fuse: input shapes differ (" + shape_str(inputs.front().shape()) + " vs " +
                          shape_str(inputs[k].shape()) + ")");
    }
    Tensor term = mul(inputs[k], index(w, k));
    numerator = numerator.defined() ? add(numerator, term) : term;
  }
  const Tensor denominator = add_scalar(sum(w, 0), kFusionEps);
  return div(numerator, denominator);
}

std::vector<Tensor> bidirectional_fuse(const std::vector<Tensor>& levels, const GraphTopology& topo,
                                       const FusionNetwork& net, FusionMode mode) {
  if (mode == FusionMode::None) return levels;
  if (levels.size() != kFusionLevels) {
    throw ContractError("fusion expects " + std::to_string(kFusionLevels) + " levels, got " +
                        std::to_string(levels.size()));
  }
  for (const auto& l : levels) {
    if (l.shape() != levels.front().shape()) {
      throw ContractError("fusion levels differ in shape (" + shape_str(levels.front().shape()) + " vs " +
                          shape_str(l.shape()) + ")");
    }
  }
  std::vector<Tensor> out(kFusionLevels);
  if (mode == FusionMode::PlainPyramid) {
    out[3] = graph_conv(levels[3], topo, net.out[3]);
    for (std::size_t l = 3; l-- > 0;) out[l] = graph_conv(add(levels[l], out[l + 1]), topo, net.out[l]);
    return out;
  }

  std::vector<Tensor> mid(kFusionLevels);
  mid[3] = levels[3];
  for (std::size_t l : {2u, 1u}) {
    mid[l] = graph_conv(weighted_fuse({levels[l], mid[l + 1]}, net.mid_weights[l]), topo, net.mid[l]);
  }
  out[0] = graph_conv(weighted_fuse({levels[0], mid[1]}, net.out_weights[0]), topo, net.out[0]);
  for (std::size_t l : {1u, 2u}) {
    out[l] = graph_conv(weighted_fuse({levels[l], mid[l], out[l - 1]}, net.out_weights[l]), topo, net.out[l]);
  }
  out[3] = graph_conv(weighted_fuse({levels[3], out[2]}, net.out_weights[3]), topo, net.out[3]);
  return out;
}

// ---- head ----

Tensor segment_head(const Tensor& backbone_concat, const std::vector<Tensor>& fused, const SegmentHead& head) {
  std::vector<Tensor> parts{backbone_concat};
  for (const auto& f : fused) {
    if (f.rows() != backbone_concat.rows()) {
      throw ContractError("segment_head: fused level " + shape_str(f.shape()) + " vs backbone " +
                          shape_str(backbone_concat.shape()));
    }
    parts.push_back(f);
  }
  const Tensor x = parts.size() == 1 ? backbone_concat : concat_cols(parts);
  if (x.cols() != head.hidden.weight.rows()) {
    throw ContractError("segment_head: input width " + std::to_string(x.cols()) + " but head expects " +
                        std::to_string(head.hidden.weight.rows()));
  }
  return head.output.forward(relu(head.hidden.forward(x)));
}

std::vector<int> predict_clusters(const Tensor& logits) {
  const std::size_t n = logits.rows(), c = logits.cols();
  const auto z = logits.data();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (z[i * c + j] > z[i * c + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict_points(const Tensor& logits, const SuperpointGraph& graph) {
  if (logits.rank() != 2 || logits.rows() != graph.num_nodes()) {
    throw ContractError("predict_points: logits " + shape_str(logits.shape()) + " for " +
                        std::to_string(graph.num_nodes()) + " clusters");
  }
  const auto per_cluster = predict_clusters(logits);
  std::vector<int> out(graph.num_points, 0);
  for (std::size_t c = 0; c < graph.num_nodes(); ++c) {
    for (auto m : graph.clusters[c].members) out[m] = per_cluster[c];
  }
  return out;
}

// ---- config ----

void ModelConfig::validate() const {
  embedding.validate();
  backbone.validate();
  if (num_classes < 1) throw ConfigError("num_classes must be positive");
  if (head_hidden < 1) throw ConfigError("head hidden width must be positive");
  if (embedding.input_width != point_input_width(use_color)) {
    throw ConfigError("embedding input width must be " + std::to_string(point_input_width(use_color)) +
                      (use_color ? " with" : " without") + " colors");
  }
  if (fusion != FusionMode::None) {
    if (stack < 1) throw ConfigError("fusion stack must be at least 1");
    if (backbone.resolved_taps().size() != kFusionLevels) {
      throw ConfigError("fusion needs exactly " + std::to_string(kFusionLevels) +
                        " backbone taps (depth >= 4 or explicit taps)");
    }
  }
}

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (auto x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

std::vector<std::size_t> parse_sizes(const std::string& text, const std::string& key) {
  std::vector<std::size_t> out;
  for (double v : parse_doubles(text)) {
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw ConfigError(key + " must list nonnegative integers");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

template <std::size_t N>
std::array<std::size_t, N> parse_fixed(const std::string& text, const std::string& key) {
  const auto v = parse_sizes(text, key);
  if (v.size() != N) throw ConfigError(key + " needs " + std::to_string(N) + " values");
  std::array<std::size_t, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

std::size_t positive(const KvConfig& cfg, const std::string& key, std::size_t fallback) {
  const long v = cfg.get_int(key, static_cast<long>(fallback));
  if (v < 0) throw ConfigError(key + " must be nonnegative");
  return static_cast<std::size_t>(v);
}

}  // namespace

const std::vector<std::string>& ModelConfig::config_keys() {
  static const std::vector<std::string> keys{
      "model.classes",       "model.use_color",     "model.edge_features", "model.embed.budgets",
      "model.embed.hidden",  "model.embed.widths",  "model.backbone.depth", "model.backbone.width",
      "model.backbone.taps", "model.backbone.long_residual", "model.fusion", "model.fusion.stack",
      "model.head.hidden"};
  return keys;
}

KvConfig ModelConfig::to_config() const {
  KvConfig c;
  c.add("model.classes", std::to_string(num_classes));
  c.add("model.use_color", use_color ? "true" : "false");
  c.add("model.edge_features", edge_features ? "true" : "false");
  c.add("model.embed.budgets", join_sizes({embedding.budgets.begin(), embedding.budgets.end()}));
  c.add("model.embed.hidden", std::to_string(embedding.hidden_width));
  c.add("model.embed.widths", join_sizes({embedding.output_widths.begin(), embedding.output_widths.end()}));
  c.add("model.backbone.depth", std::to_string(backbone.depth));
  c.add("model.backbone.width", std::to_string(backbone.width));
  if (!backbone.taps.empty()) c.add("model.backbone.taps", join_sizes(backbone.taps));
  c.add("model.backbone.long_residual", backbone.long_residual ? "true" : "false");
  c.add("model.fusion", fusion_mode_name(fusion));
  c.add("model.fusion.stack", std::to_string(stack));
  c.add("model.head.hidden", std::to_string(head_hidden));
  return c;
}

ModelConfig ModelConfig::from_config(const KvConfig& cfg) {
  ModelConfig m;
  m.num_classes = positive(cfg, "model.classes", m.num_classes);
  m.use_color = cfg.get_bool("model.use_color", m.use_color);
  m.edge_features = cfg.get_bool("model.edge_features", m.edge_features);
  m.embedding.input_width = point_input_width(m.use_color);
  if (auto v = cfg.get("model.embed.budgets")) m.embedding.budgets = parse_fixed<3>(*v, "model.embed.budgets");
  m.embedding.hidden_width = positive(cfg, "model.embed.hidden", m.embedding.hidden_width);
  if (auto v = cfg.get("model.embed.widths")) m.embedding.output_widths = parse_fixed<3>(*v, "model.embed.widths");
  m.backbone.depth = positive(cfg, "model.backbone.depth", m.backbone.depth);
  m.backbone.width = positive(cfg, "model.backbone.width", m.backbone.width);
  if (auto v = cfg.get("model.backbone.taps")) m.backbone.taps = parse_sizes(*v, "model.backbone.taps");
  m.backbone.long_residual = cfg.get_bool("model.backbone.long_residual", m.backbone.long_residual);
  if (auto v = cfg.get("model.fusion")) m.fusion = parse_fusion_mode(*v);
  m.stack = positive(cfg, "model.fusion.stack", m.stack);
  m.head_hidden = positive(cfg, "model.head.hidden", m.head_hidden);
  m.validate();
  return m;
}

// ---- scene preparation ----

SceneInput prepare_scene(const ClusteredScene& scene, const ModelConfig& cfg) {
  SceneInput in;
  in.cluster_points = prepare_cluster_inputs(scene, cfg.embedding, cfg.use_color);
  in.topology = GraphTopology::from_graph(scene.graph);
  in.num_points = scene.graph.num_points;
  for (const auto& c : scene.graph.clusters) in.cluster_sizes.push_back(static_cast<double>(c.size()));
  if (scene.cloud.labels) {
    in.cluster_labels = cluster_majority_labels(scene.graph, *scene.cloud.labels);
    for (int l : in.cluster_labels) {
      if (static_cast<std::size_t>(l) >= cfg.num_classes) {
        throw ValidationError("cluster label " + std::to_string(l) + " outside the model's " +
                              std::to_string(cfg.num_classes) + " classes");
      }
    }
  }
  return in;
}

// ---- model ----

MuGNet::MuGNet(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Initializer init(seed);
  embedding_ = make_embedding_params(cfg_.embedding, store_, init);

  const std::size_t f = cfg_.backbone.width;
  for (std::size_t i = 0; i < cfg_.backbone.depth; ++i) {
    const std::string name = "backbone.block" + std::to_string(i + 1);
    BackboneBlock b;
    const std::size_t in = i == 0 ? cfg_.embedding.output_width() : f;
    b.conv = make_graph_conv(store_, init, name + ".conv", in, f, cfg_.edge_features);
    b.gamma = store_.add(name + ".bn.gamma", Tensor::full({f}, 1.0));
    b.beta = store_.add(name + ".bn.beta", Tensor::zeros({f}));
    b.stats = BatchNormStats::fresh(f);
    store_.add(name + ".bn.running_mean", b.stats.running_mean, false);
    store_.add(name + ".bn.running_var", b.stats.running_var, false);
    blocks_.push_back(std::move(b));
  }

  if (cfg_.fusion != FusionMode::None) {
    for (std::size_t s = 0; s < cfg_.stack; ++s) {
      fusion_.push_back(make_fusion_network(store_, init, "fusion" + std::to_string(s + 1), f, cfg_.fusion,
                                            cfg_.edge_features));
    }
  }

  const std::size_t taps = cfg_.backbone.resolved_taps().size();
  const std::size_t head_in = taps * f + (cfg_.fusion != FusionMode::None ? kFusionLevels * f : 0);
  head_.hidden = make_linear(store_, init, "head.hidden", head_in, cfg_.head_hidden);
  head_.output = make_linear(store_, init, "head.output", cfg_.head_hidden, cfg_.num_classes);
}

MuGNet::Trace MuGNet::forward_trace(const SceneInput& input, BatchNormMode mode) {
  Trace t;
  t.embedding = embed_stacked(input.cluster_points, cfg_.embedding, embedding_);
  t.backbone = backbone_forward(t.embedding, input.topology, cfg_.backbone, blocks_, mode);
  if (cfg_.fusion != FusionMode::None) {
    std::vector<Tensor> levels = t.backbone.taps;
    for (const auto& net : fusion_) levels = bidirectional_fuse(levels, input.topology, net, cfg_.fusion);
    t.fused = std::move(levels);
  }
  t.logits = segment_head(t.backbone.concat, t.fused, head_);
  return t;
}

Tensor MuGNet::forward(const SceneInput& input, BatchNormMode mode) {
  return forward_trace(input, mode).logits;
}

}  // namespace mugnet
