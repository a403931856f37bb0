#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "mugnet/checkpoint.hpp"
#include "mugnet/errors.hpp"
#include "mugnet/model.hpp"
#include "mugnet/train.hpp"
#include "test_util.hpp"

using namespace mugnet;
using mugnet::testing::random_scene_input;
using mugnet::testing::random_tensor;
using mugnet::testing::tiny_model_config;

namespace {

void set_all(const Tensor& t, double v) {
  Tensor h = t;
  for (auto& x : h.mutable_data()) x = v;
}

void expect_close(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.at(i), b.at(i), tol) << "element " << i;
}

Tensor mean_of(const std::vector<Tensor>& xs) {
  Tensor s = xs.front();
  for (std::size_t k = 1; k < xs.size(); ++k) s = add(s, xs[k]);
  return scale(s, 1.0 / static_cast<double>(xs.size()));
}

struct FusionFixture {
  std::mt19937_64 rng{11};
  ParamStore store;
  Initializer init{12};
  std::size_t width = 3;
  SceneInput scene;
  std::vector<Tensor> levels;

  explicit FusionFixture(std::size_t nodes = 9) {
    scene = random_scene_input(rng, tiny_model_config(), nodes, 0.4);
    for (std::size_t l = 0; l < kFusionLevels; ++l) levels.push_back(random_tensor(rng, {nodes, width}));
  }
};

}  // namespace

TEST(Backbone, ResolvedTaps) {
  BackboneConfig c;
  c.depth = 7;
  EXPECT_EQ(c.resolved_taps(), (std::vector<std::size_t>{4, 5, 6, 7}));
  c.depth = 2;
  EXPECT_EQ(c.resolved_taps(), (std::vector<std::size_t>{1, 2}));
  c.taps = {3};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Backbone, ResidualStructureByHand) {
  // Compare against an explicit loop over blocks with the residual wiring
  // written out.
  std::mt19937_64 rng(1);
  auto cfg = tiny_model_config();
  cfg.backbone.depth = 5;
  MuGNet model(cfg, 2);
  const auto in = random_scene_input(rng, cfg, 8);
  const Tensor h0 = random_tensor(rng, {8, cfg.embedding.output_width()});
  const auto out = backbone_forward(h0, in.topology, cfg.backbone, model.blocks(), BatchNormMode::Eval);

  std::vector<Tensor> z;
  Tensor h = h0;
  for (std::size_t i = 0; i < 5; ++i) {
    auto& b = model.blocks()[i];
    Tensor y = relu(batch_norm(graph_conv(h, in.topology, b.conv), b.gamma, b.beta, b.stats, BatchNormMode::Eval));
    if (i > 0) y = add(y, z.back());
    if (i == 4) y = add(y, z.front());
    z.push_back(y);
    h = y;
  }
  ASSERT_EQ(out.taps.size(), 4u);
  for (std::size_t t = 0; t < 4; ++t) expect_close(out.taps[t], z[t + 1], 0.0);
  EXPECT_EQ(out.concat.cols(), 4 * cfg.backbone.width);
}

TEST(Fusion, WeightedFuseValues) {
  const Tensor a = Tensor::matrix(1, 2, {1, 2});
  const Tensor b = Tensor::matrix(1, 2, {3, 6});
  const Tensor w = Tensor({2}, {3, -5});  // negative weight is clamped to 0
  const Tensor y = weighted_fuse({a, b}, w);
  EXPECT_NEAR(y.at(0), 3.0 / (3.0 + kFusionEps), 1e-15);
  EXPECT_NEAR(y.at(1), 6.0 / (3.0 + kFusionEps), 1e-15);
  EXPECT_THROW(weighted_fuse({a, b}, Tensor({3}, {1, 1, 1})), ContractError);
  EXPECT_THROW(weighted_fuse({a, Tensor::zeros({2, 2})}, Tensor({2}, {1, 1})), ContractError);
}

TEST(Fusion, EqualLargeWeightsGiveUnweightedMean) {
  FusionFixture f;
  auto net = make_fusion_network(f.store, f.init, "fusion1", f.width, FusionMode::BidirectionalWeighted, true);
  for (std::size_t l = 0; l < kFusionLevels; ++l) {
    if (net.mid_weights[l].defined()) set_all(net.mid_weights[l], 1e7);
    set_all(net.out_weights[l], 1e7);
  }
  const auto got = bidirectional_fuse(f.levels, f.scene.topology, net, FusionMode::BidirectionalWeighted);

  const auto& x = f.levels;
  const auto& t = f.scene.topology;
  const Tensor mid3 = graph_conv(mean_of({x[2], x[3]}), t, net.mid[2]);
  const Tensor mid2 = graph_conv(mean_of({x[1], mid3}), t, net.mid[1]);
  const Tensor out1 = graph_conv(mean_of({x[0], mid2}), t, net.out[0]);
  const Tensor out2 = graph_conv(mean_of({x[1], mid2, out1}), t, net.out[1]);
  const Tensor out3 = graph_conv(mean_of({x[2], mid3, out2}), t, net.out[2]);
  const Tensor out4 = graph_conv(mean_of({x[3], out3}), t, net.out[3]);
  const std::vector<Tensor> want{out1, out2, out3, out4};
  for (std::size_t l = 0; l < kFusionLevels; ++l) expect_close(got[l], want[l], 1e-9);
}

TEST(Fusion, EqualUnitWeightsCarryEpsilonFactor) {
  FusionFixture f;
  auto net = make_fusion_network(f.store, f.init, "fusion1", f.width, FusionMode::BidirectionalWeighted, false);
  const auto got = bidirectional_fuse(f.levels, f.scene.topology, net, FusionMode::BidirectionalWeighted);
  const auto fuse = [](const std::vector<Tensor>& xs) {
    const double n = static_cast<double>(xs.size());
    return scale(mean_of(xs), n / (n + kFusionEps));
  };
  const auto& x = f.levels;
  const auto& t = f.scene.topology;
  const Tensor mid3 = graph_conv(fuse({x[2], x[3]}), t, net.mid[2]);
  const Tensor mid2 = graph_conv(fuse({x[1], mid3}), t, net.mid[1]);
  const Tensor out1 = graph_conv(fuse({x[0], mid2}), t, net.out[0]);
  const Tensor out2 = graph_conv(fuse({x[1], mid2, out1}), t, net.out[1]);
  const Tensor out3 = graph_conv(fuse({x[2], mid3, out2}), t, net.out[2]);
  const Tensor out4 = graph_conv(fuse({x[3], out3}), t, net.out[3]);
  const std::vector<Tensor> want{out1, out2, out3, out4};
  for (std::size_t l = 0; l < kFusionLevels; ++l) expect_close(got[l], want[l], 1e-12);
}

TEST(Fusion, PlainPyramidMatchesHandComposition) {
  FusionFixture f;
  auto net = make_fusion_network(f.store, f.init, "fusion1", f.width, FusionMode::PlainPyramid, true);
  EXPECT_FALSE(net.out_weights[0].defined());
  const auto got = bidirectional_fuse(f.levels, f.scene.topology, net, FusionMode::PlainPyramid);
  const auto& x = f.levels;
  const auto& t = f.scene.topology;
  const Tensor o4 = graph_conv(x[3], t, net.out[3]);
  const Tensor o3 = graph_conv(add(x[2], o4), t, net.out[2]);
  const Tensor o2 = graph_conv(add(x[1], o3), t, net.out[1]);
  const Tensor o1 = graph_conv(add(x[0], o2), t, net.out[0]);
  const std::vector<Tensor> want{o1, o2, o3, o4};
  for (std::size_t l = 0; l < kFusionLevels; ++l) expect_close(got[l], want[l], 1e-9);
}

TEST(Fusion, NoneModePassesLevelsThrough) {
  FusionFixture f;
  const auto got = bidirectional_fuse(f.levels, f.scene.topology, FusionNetwork{}, FusionMode::None);
  for (std::size_t l = 0; l < kFusionLevels; ++l) expect_close(got[l], f.levels[l], 0.0);
}

TEST(Fusion, WrongLevelCountRejected) {
  FusionFixture f;
  auto net = make_fusion_network(f.store, f.init, "fusion1", f.width, FusionMode::BidirectionalWeighted, true);
  std::vector<Tensor> three(f.levels.begin(), f.levels.begin() + 3);
  EXPECT_THROW(bidirectional_fuse(three, f.scene.topology, net, FusionMode::BidirectionalWeighted), ContractError);
}

TEST(Fusion, ZeroWeightsStayFinite) {
  std::mt19937_64 rng(5);
  const auto cfg = tiny_model_config();
  MuGNet model(cfg, 6);
  for (const auto& e : model.params().entries()) {
    if (e.name.size() > 2 && e.name.compare(e.name.size() - 2, 2, ".w") == 0) set_all(e.tensor, 0.0);
  }
  const auto in = random_scene_input(rng, cfg, 12);
  model.params().zero_grad();
  const Tensor loss = cluster_loss(model.forward(in, BatchNormMode::Train), in.cluster_labels, in.cluster_sizes);
  loss.backward();
  EXPECT_TRUE(std::isfinite(loss.item()));
  for (const auto& p : model.params().trainable()) {
    for (double g : p.grad()) ASSERT_TRUE(std::isfinite(g));
  }
}

TEST(Head, ZeroWeightsGiveZeroLogits) {
  std::mt19937_64 rng(7);
  const auto cfg = tiny_model_config();
  MuGNet model(cfg, 8);
  for (const auto* l : {&model.head().hidden, &model.head().output}) {
    set_all(l->weight, 0.0);
    set_all(l->bias, 0.0);
  }
  const auto in = random_scene_input(rng, cfg, 6);
  const Tensor logits = model.forward(in, BatchNormMode::Eval);
  EXPECT_EQ(logits.shape(), (Shape{6, 3}));
  for (double v : logits.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(predict_clusters(logits), (std::vector<int>(6, 0)));
}

TEST(Head, RowMismatchRejected) {
  const auto cfg = tiny_model_config();
  MuGNet model(cfg, 1);
  EXPECT_THROW(segment_head(Tensor::zeros({3, 16}), {Tensor::zeros({2, 4})}, model.head()), ContractError);
}

TEST(Predict, ArgmaxAndPointExpansion) {
  const Tensor logits = Tensor::matrix(3, 3, {0.1, 0.9, 0.0, 2, 2, 1, -1, -2, -0.5});
  EXPECT_EQ(predict_clusters(logits), (std::vector<int>{1, 0, 2}));
  SuperpointGraph g;
  g.num_points = 6;
  g.clusters.resize(3);
  g.clusters[0].members = {0, 4};
  g.clusters[1].members = {1, 2, 5};
  g.clusters[2].members = {3};
  EXPECT_EQ(predict_points(logits, g), (std::vector<int>{1, 0, 0, 2, 1, 0}));
  g.clusters.pop_back();
  EXPECT_THROW(predict_points(logits, g), ContractError);
}

TEST(ModelConfig, RoundTripAndValidation) {
  auto cfg = tiny_model_config(4);
  cfg.backbone.depth = 6;
  cfg.backbone.taps = {2, 3, 5, 6};
  cfg.stack = 2;
  cfg.fusion = FusionMode::PlainPyramid;
  const auto text = cfg.to_config().to_string();
  const auto back = ModelConfig::from_config(KvConfig::parse_string(text));
  EXPECT_EQ(back.to_config().to_string(), text);

  auto bad = tiny_model_config();
  bad.backbone.depth = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.fusion = FusionMode::None;
  EXPECT_NO_THROW(bad.validate());
  EXPECT_THROW(parse_fusion_mode("sideways"), ConfigError);
  auto color = tiny_model_config();
  color.use_color = true;
  EXPECT_THROW(color.validate(), ConfigError);
}

TEST(ModelConfig, ParameterNames) {
  MuGNet model(tiny_model_config(), 0);
  const auto& p = model.params();
  EXPECT_TRUE(p.find("backbone.block1.conv.w_self").defined());
  EXPECT_TRUE(p.find("fusion1.mid3.w").defined());
  EXPECT_TRUE(p.find("fusion1.out2.w").defined());
  EXPECT_EQ(p.find("fusion1.out2.w").numel(), 3u);
  EXPECT_EQ(p.find("fusion1.out4.w").numel(), 2u);
  EXPECT_TRUE(p.find("head.output.weight").defined());
}

TEST(Checkpoint, ByteExactRoundTrip) {
  std::mt19937_64 rng(9);
  const auto cfg = tiny_model_config();
  MuGNet model(cfg, 10);
  const auto in = random_scene_input(rng, cfg, 7);
  model.forward(in, BatchNormMode::Train);  // moves the running statistics
  KvConfig extra;
  extra.add("train.seed", "10");
  std::stringstream first;
  write_checkpoint(first, model, extra);
  auto loaded = read_checkpoint(first);
  EXPECT_EQ(loaded.extra.get("train.seed"), "10");
  std::stringstream second;
  write_checkpoint(second, loaded.model, loaded.extra);
  EXPECT_EQ(first.str(), second.str());
  expect_close(model.forward(in, BatchNormMode::Eval), loaded.model.forward(in, BatchNormMode::Eval), 0.0);
}

TEST(Checkpoint, CorruptInputRejected) {
  std::stringstream empty("NOTACKPT");
  EXPECT_THROW(read_checkpoint(empty), ValidationError);
  MuGNet model(tiny_model_config(), 1);
  std::stringstream full;
  write_checkpoint(full, model);
  std::stringstream truncated(full.str().substr(0, full.str().size() / 2));
  EXPECT_THROW(read_checkpoint(truncated), ValidationError);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), IoError);
}

TEST(Model, FullGradientCheck) {
  std::mt19937_64 rng(13);
  const auto cfg = tiny_model_config();
  MuGNet model(cfg, 14);
  const auto in = random_scene_input(rng, cfg, 10, 0.35);
  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (const auto& e : model.params().entries()) {
    if (!e.trainable) continue;
    params.push_back(e.tensor);
    names.push_back(e.name);
  }
  mugnet::testing::jitter(params, rng);
  const auto r = mugnet::testing::check_gradients(
      [&] { return cluster_loss(model.forward(in, BatchNormMode::Eval), in.cluster_labels, in.cluster_sizes); },
      params, names);
  EXPECT_EQ(r.checked, [&] {
    std::size_t n = 0;
    for (const auto& p : params) n += p.numel();
    return n;
  }());
  for (const auto& m : r.failures) {
    ADD_FAILURE() << m.name << "[" << m.index << "] analytic " << m.analytic << " numeric " << m.numeric;
  }
}

TEST(Model, TrainModeBatchNormCancelsPreNormBias) {
  std::mt19937_64 rng(15);
  const auto cfg = tiny_model_config();
  MuGNet model(cfg, 16);
  const auto in = random_scene_input(rng, cfg, 10, 0.35);
  model.params().zero_grad();
  cluster_loss(model.forward(in, BatchNormMode::Train), in.cluster_labels, in.cluster_sizes).backward();
  for (double g : model.params().find("backbone.block2.conv.bias").grad()) EXPECT_NEAR(g, 0.0, 1e-10);
}

// Renaming nodes permutes logits row-wise.
class NodePermutation : public ::testing::TestWithParam<int> {};

TEST_P(NodePermutation, LogitsFollowRelabeling) {
  std::mt19937_64 rng(200 + GetParam());
  const auto cfg = tiny_model_config();
  MuGNet model(cfg, 17);
  const std::size_t n = 2 + rng() % 12;
  const auto in = random_scene_input(rng, cfg, n);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto pin = mugnet::testing::permute_scene_input(in, perm, cfg.embedding.budgets[0]);
  const Tensor a = model.forward(in, BatchNormMode::Eval);
  const Tensor b = model.forward(pin, BatchNormMode::Eval);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < cfg.num_classes; ++c) EXPECT_NEAR(a.at(i, c), b.at(perm[i], c), 1e-9);
  }
}

INSTANTIATE_TEST_SUITE_P(Random, NodePermutation, ::testing::Range(0, 20));
