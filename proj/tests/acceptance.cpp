// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mugnet/ablation.hpp"
#include "mugnet/bench.hpp"
#include "mugnet/checkpoint.hpp"
#include "mugnet/errors.hpp"
#include "mugnet/metrics.hpp"
#include "mugnet/synth.hpp"
#include "mugnet/train.hpp"
#include "test_util.hpp"

using namespace mugnet;
using mugnet::testing::random_scene_input;
using mugnet::testing::random_tensor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

// Every parameter family at a width small enough for element-wise central
// differences.
ModelConfig gradient_config() {
  ModelConfig cfg;
  cfg.embedding.budgets = {8, 4, 2};
  cfg.embedding.hidden_width = 6;
  cfg.embedding.output_widths = {5, 4, 3};
  cfg.backbone.depth = 5;
  cfg.backbone.width = 5;
  cfg.head_hidden = 6;
  return cfg;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  const auto cfg = gradient_config();
  MuGNet model(cfg, 2);
  const auto in = random_scene_input(rng, cfg, 20, 0.25);
  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (const auto& e : model.params().entries()) {
    if (e.trainable) {
      params.push_back(e.tensor);
      names.push_back(e.name);
    }
  }
  mugnet::testing::jitter(params, rng);
  double worst = 0;
  std::size_t checked = 0, failures = 0;
  std::string first;
  for (BatchNormMode mode : {BatchNormMode::Eval, BatchNormMode::Train}) {
    const auto r = mugnet::testing::check_gradients(
        [&] { return cluster_loss(model.forward(in, mode), in.cluster_labels, in.cluster_sizes); }, params, names);
    worst = std::max(worst, r.worst);
    checked += r.checked;
    failures += r.failures.size();
    if (first.empty() && !r.failures.empty()) first = " first " + r.failures.front().name;
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 60.0,
          std::to_string(params.size()) + " tensors, " + std::to_string(checked) + " elements (eval+train BN), worst rel " +
              fmt("%.2e", worst) + " < 1e-4, " + std::to_string(failures) + " failures" + first + ", " +
              fmt("%.1f", secs) + " s < 60 s"};
}

Outcome permutation_suite() {
  std::mt19937_64 rng(3);
  const ModelConfig cfg;  // default widths
  MuGNet model(cfg, 4);
  double worst_embed = 0, worst_logits = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng() % 200;
    const Tensor pts = random_tensor(rng, {m, cfg.embedding.input_width});
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Tensor shuffled = gather_rows(pts, perm);
    const Tensor a = embed_cluster(pts, cfg.embedding, model.embedding());
    const Tensor b = embed_cluster(shuffled, cfg.embedding, model.embedding());
    for (std::size_t i = 0; i < a.numel(); ++i) worst_embed = std::max(worst_embed, std::abs(a.at(i) - b.at(i)));
  }
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 19;
    const auto in = random_scene_input(rng, cfg, n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto pin = mugnet::testing::permute_scene_input(in, perm, cfg.embedding.budgets[0]);
    const Tensor a = model.forward(in, BatchNormMode::Eval);
    const Tensor b = model.forward(pin, BatchNormMode::Eval);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        worst_logits = std::max(worst_logits, std::abs(a.at(i, c) - b.at(perm[i], c)));
      }
    }
  }
  return {worst_embed <= 1e-9 && worst_logits <= 1e-9,
          "embedding max diff " + fmt("%.2e", worst_embed) + ", logits max diff " + fmt("%.2e", worst_logits) +
              " (<= 1e-9, 100 trials each)"};
}

ClusteredScene room(std::size_t points, std::uint64_t seed) {
  return cluster_scene(synth_scene(default_room_recipe(points), seed), ClusterSettings{});
}

Outcome overfit() {
  const auto scene = room(50000, 0);
  TrainConfig cfg;
  const auto input = prepare_scene(scene, cfg.model);
  const auto t0 = Clock::now();
  auto result = train({input}, cfg);
  const double secs = seconds_since(t0);
  double acc;
  {
    NoGradGuard guard;
    acc = cluster_accuracy(result.model.forward(input, BatchNormMode::Eval), input.cluster_labels);
  }
  const auto pred = infer_points(result.model, input, scene.graph);
  const auto ev = evaluate(pred, *scene.cloud.labels, cfg.model.num_classes);
  return {acc >= 0.95 && ev.oa >= 0.90 && secs < 300.0,
          std::to_string(input.num_clusters()) + " clusters, cluster acc " + fmt("%.4f", acc) + " >= 0.95, point OA " +
              fmt("%.4f", ev.oa) + " >= 0.90, training " + fmt("%.1f", secs) + " s < 300 s"};
}

Outcome generalization() {
  TrainConfig cfg;
  std::vector<SceneInput> train_inputs;
  for (std::uint64_t s = 0; s < 8; ++s) train_inputs.push_back(prepare_scene(room(50000, s), cfg.model));
  auto result = train(train_inputs, cfg);
  std::vector<int> pred, truth;
  for (std::uint64_t s = 8; s < 10; ++s) {
    const auto scene = room(50000, s);
    const auto p = infer_points(result.model, prepare_scene(scene, cfg.model), scene.graph);
    pred.insert(pred.end(), p.begin(), p.end());
    truth.insert(truth.end(), scene.cloud.labels->begin(), scene.cloud.labels->end());
  }
  const auto ev = evaluate(pred, truth, cfg.model.num_classes);
  return {ev.miou >= 0.6, "held-out seeds 8-9 point mIoU " + fmt("%.4f", ev.miou) + " >= 0.6 (OA " +
                              fmt("%.4f", ev.oa) + ", " + std::to_string(cfg.epochs) + " epochs)"};
}

Outcome compression() {
  const auto scene = room(100000, 0);
  const double ratio = compression_ratio(scene.graph);
  const auto q = purity(scene.graph, scene.cloud);
  double unweighted = 0;
  for (double p : q.cluster_purity) unweighted += p;
  unweighted /= static_cast<double>(q.cluster_purity.size());
  return {ratio >= 100.0 && q.mean_purity >= 0.9 && unweighted >= 0.9,
          std::to_string(q.cluster_count) + " clusters, compression " + fmt("%.1f", ratio) +
              " >= 100, purity " + fmt("%.4f", q.mean_purity) + " (per-cluster mean " + fmt("%.4f", unweighted) +
              ") >= 0.9"};
}

Outcome metric_oracle() {
  std::mt19937_64 rng(6);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 1 + rng() % 5, n = 1 + rng() % 10000;
    std::vector<int> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng() % c);
      pred[i] = rng() % 2 ? truth[i] : static_cast<int>(rng() % c);
    }
    const auto r = evaluate(pred, truth, c);
    std::size_t correct = 0, present = 0;
    double sum = 0;
    for (std::size_t k = 0; k < c; ++k) {
      std::size_t inter = 0, uni = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool in_p = pred[i] == static_cast<int>(k), in_t = truth[i] == static_cast<int>(k);
        inter += in_p && in_t;
        uni += in_p || in_t;
      }
      correct += inter;
      if (uni == 0) continue;
      const double iou = static_cast<double>(inter) / static_cast<double>(uni);
      mismatches += r.iou[k] != iou;
      sum += iou;
      ++present;
    }
    mismatches += r.oa != static_cast<double>(correct) / static_cast<double>(n);
    mismatches += r.miou != sum / static_cast<double>(present);
  }
  return {mismatches == 0, "1000 instances, " + std::to_string(mismatches) + " inexact values"};
}

Outcome epsilon_guard() {
  std::mt19937_64 rng(7);
  const ModelConfig cfg;
  MuGNet model(cfg, 8);
  std::size_t zeroed = 0;
  for (const auto& e : model.params().entries()) {
    if (e.name.size() > 2 && e.name.compare(e.name.size() - 2, 2, ".w") == 0) {
      Tensor w = e.tensor;
      for (auto& x : w.mutable_data()) x = 0.0;
      ++zeroed;
    }
  }
  const auto in = random_scene_input(rng, cfg, 15);
  model.params().zero_grad();
  const Tensor loss = cluster_loss(model.forward(in, BatchNormMode::Train), in.cluster_labels, in.cluster_sizes);
  loss.backward();
  bool finite = std::isfinite(loss.item());
  for (const auto& p : model.params().trainable()) {
    for (double g : p.grad()) finite = finite && std::isfinite(g);
  }
  // Two mid and four output weight vectors per fusion network.
  const std::size_t expected = 6 * cfg.stack;
  return {finite && zeroed == expected, std::to_string(zeroed) + " weight vectors zeroed, loss " + fmt("%.4f", loss.item()) +
                                     (finite ? ", all gradients finite" : ", non-finite values")};
}

Tensor mean_of(const std::vector<Tensor>& xs) {
  Tensor s = xs.front();
  for (std::size_t k = 1; k < xs.size(); ++k) s = add(s, xs[k]);
  return scale(s, 1.0 / static_cast<double>(xs.size()));
}

double max_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double d = 0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    for (std::size_t i = 0; i < a[l].numel(); ++i) d = std::max(d, std::abs(a[l].at(i) - b[l].at(i)));
  }
  return d;
}

Outcome fusion_reduction() {
  std::mt19937_64 rng(9);
  const std::size_t n = 12, width = 16;
  const auto scene = random_scene_input(rng, ModelConfig{}, n, 0.3);
  const auto& t = scene.topology;
  std::vector<Tensor> x;
  for (std::size_t l = 0; l < kFusionLevels; ++l) x.push_back(random_tensor(rng, {n, width}));

  ParamStore store;
  Initializer init(10);
  auto bi = make_fusion_network(store, init, "fusion1", width, FusionMode::BidirectionalWeighted, true);
  // Equal scalars large enough that the epsilon in the denominator is below
  // the tolerance.
  const double c = 1e7;
  for (std::size_t l = 0; l < kFusionLevels; ++l) {
    for (Tensor w : {bi.mid_weights[l], bi.out_weights[l]}) {
      if (w.defined()) {
        for (auto& v : w.mutable_data()) v = c;
      }
    }
  }
  const auto got = bidirectional_fuse(x, t, bi, FusionMode::BidirectionalWeighted);
  const Tensor mid3 = graph_conv(mean_of({x[2], x[3]}), t, bi.mid[2]);
  const Tensor mid2 = graph_conv(mean_of({x[1], mid3}), t, bi.mid[1]);
  const Tensor out1 = graph_conv(mean_of({x[0], mid2}), t, bi.out[0]);
  const Tensor out2 = graph_conv(mean_of({x[1], mid2, out1}), t, bi.out[1]);
  const Tensor out3 = graph_conv(mean_of({x[2], mid3, out2}), t, bi.out[2]);
  const Tensor out4 = graph_conv(mean_of({x[3], out3}), t, bi.out[3]);
  const double d_bi = max_diff(got, {out1, out2, out3, out4});

  auto py = make_fusion_network(store, init, "fusion2", width, FusionMode::PlainPyramid, true);
  const auto gp = bidirectional_fuse(x, t, py, FusionMode::PlainPyramid);
  const Tensor o4 = graph_conv(x[3], t, py.out[3]);
  const Tensor o3 = graph_conv(add(x[2], o4), t, py.out[2]);
  const Tensor o2 = graph_conv(add(x[1], o3), t, py.out[1]);
  const Tensor o1 = graph_conv(add(x[0], o2), t, py.out[0]);
  const double d_py = max_diff(gp, {o1, o2, o3, o4});
  return {d_bi <= 1e-9 && d_py <= 1e-9, "bidirectional (all w = 1e7) vs mean composition " + fmt("%.2e", d_bi) +
                                            ", pyramid vs hand composition " + fmt("%.2e", d_py) + " (<= 1e-9)"};
}

Outcome ablation() {
  const auto t0 = Clock::now();
  std::vector<ClusteredScene> scenes;
  for (std::uint64_t s = 0; s < 4; ++s) scenes.push_back(room(8000, s));
  TrainConfig base;
  base.epochs = 10;
  const auto grid = standard_ablation_grid(base);
  const auto rows = run_ablation(grid, scenes, make_folds(scenes.size(), 2));
  std::ostringstream table;
  write_ablation_table(table, rows);
  std::cout << table.str();
  bool ok = rows.size() == grid.size();
  for (const auto& r : rows) ok = ok && std::isfinite(r.final_loss) && r.fold_miou.size() == 2;
  return {ok, std::to_string(rows.size()) + " configs x 2 folds, " + std::to_string(base.epochs) + " epochs each, " +
                  fmt("%.1f", seconds_since(t0)) + " s"};
}

Outcome bench_trends() {
  const ModelConfig cfg;
  MuGNet model(cfg, 11);
  const auto input = prepare_scene(room(50000, 0), cfg);
  const std::vector<SceneInput> scenes(8, input);
  const auto report = bench_batched(model, scenes, {1, 2, 4, 8});
  write_bench_summary(std::cout, report);

  std::vector<const SceneInput*> ptrs;
  for (const auto& s : scenes) ptrs.push_back(&s);
  const auto seq = infer_sequential(model, ptrs);
  const auto bat = infer_batched(model, ptrs);
  bool identical = seq.size() == bat.size();
  for (std::size_t i = 0; identical && i < seq.size(); ++i) {
    identical = std::equal(seq[i].data().begin(), seq[i].data().end(), bat[i].data().begin(), bat[i].data().end());
  }
  const double batch8 = report.rows.back().mean_s, single = report.rows.front().mean_s;
  const bool faster = batch8 < 8.0 * single;
  return {faster && report.memory_monotone() && identical,
          "batch 8 " + fmt("%.3f", batch8) + " s vs 8 x single " + fmt("%.3f", 8.0 * single) + " s (ratio " +
              fmt("%.3f", report.time_ratio_vs_linear()) + " < 1), memory " +
              (report.memory_monotone() ? "monotone" : "NOT monotone") + ", logits " +
              (identical ? "bit-identical" : "differ")};
}

struct PipelineRun {
  std::string checkpoint;
  EvalResult metrics;
};

PipelineRun pipeline(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = seed;
  const auto scene = room(10000, seed);
  const auto input = prepare_scene(scene, cfg.model);
  auto result = train({input}, cfg);
  std::ostringstream out;
  write_checkpoint(out, result.model);
  const auto pred = infer_points(result.model, input, scene.graph);
  return {out.str(), evaluate(pred, *scene.cloud.labels, cfg.model.num_classes)};
}

Outcome determinism() {
  const auto a = pipeline(5);
  const auto b = pipeline(5);
  const bool same_ckpt = a.checkpoint == b.checkpoint;
  const bool same_metrics = a.metrics.oa == b.metrics.oa && a.metrics.miou == b.metrics.miou &&
                            a.metrics.iou == b.metrics.iou && a.metrics.confusion == b.metrics.confusion;
  return {same_ckpt && same_metrics, "checkpoints (" + std::to_string(a.checkpoint.size()) + " bytes) " +
                                         (same_ckpt ? "identical" : "differ") + ", metrics " +
                                         (same_metrics ? "identical" : "differ") + " (OA " +
                                         fmt("%.4f", a.metrics.oa) + ")"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"permutation suite", permutation_suite},
      {"overfit", overfit},
      {"generalization", generalization},
      {"compression", compression},
      {"metric oracle", metric_oracle},
      {"epsilon guard", epsilon_guard},
      {"fusion reduction", fusion_reduction},
      {"ablation harness", ablation},
      {"bench trends", bench_trends},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail << " ("
              << fmt("%.1f", seconds_since(t0)) << " s)" << std::endl;
  }
  std::cout << criteria.size() - failed << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
