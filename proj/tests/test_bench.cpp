#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "mugnet/bench.hpp"
#include "mugnet/errors.hpp"
#include "test_util.hpp"

using namespace mugnet;
using mugnet::testing::random_scene_input;
using mugnet::testing::tiny_model_config;

namespace {

std::vector<SceneInput> scenes(std::size_t count) {
  std::mt19937_64 rng(21);
  std::vector<SceneInput> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(random_scene_input(rng, tiny_model_config(), 5 + 2 * i));
  return out;
}

std::vector<const SceneInput*> pointers(const std::vector<SceneInput>& s) {
  std::vector<const SceneInput*> out;
  for (const auto& x : s) out.push_back(&x);
  return out;
}

}  // namespace

TEST(Union, OffsetsNodesAndStacksRows) {
  const auto s = scenes(3);
  const auto u = union_scenes(pointers(s));
  EXPECT_EQ(u.num_clusters(), 5u + 7u + 9u);
  EXPECT_EQ(u.topology.num_edges(), s[0].topology.num_edges() + s[1].topology.num_edges() + s[2].topology.num_edges());
  EXPECT_EQ(u.cluster_points.rows(), s[0].cluster_points.rows() + s[1].cluster_points.rows() + s[2].cluster_points.rows());
  for (std::size_t k = 0; k < s[1].topology.num_edges(); ++k) {
    const std::size_t e = s[0].topology.num_edges() + k;
    EXPECT_EQ(u.topology.src[e], s[1].topology.src[k] + 5);
    EXPECT_EQ(u.topology.dst[e], s[1].topology.dst[k] + 5);
  }
  EXPECT_THROW(union_scenes({}), ParameterError);
}

TEST(Union, BatchedLogitsBitIdenticalToSequential) {
  const auto s = scenes(5);
  MuGNet model(tiny_model_config(), 3);
  const auto seq = infer_sequential(model, pointers(s));
  for (std::size_t workers : {1u, 2u, 5u}) {
    const auto bat = infer_batched(model, pointers(s), workers);
    ASSERT_EQ(bat.size(), seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) {
      ASSERT_EQ(bat[i].shape(), seq[i].shape());
      for (std::size_t j = 0; j < seq[i].numel(); ++j) EXPECT_EQ(bat[i].at(j), seq[i].at(j));
    }
  }
}

TEST(Bench, RowsAndCsvRoundTrip) {
  const auto s = scenes(4);
  MuGNet model(tiny_model_config(), 3);
  BenchOptions opts;
  opts.repetitions = 2;
  const auto report = bench_batched(model, s, {1, 2, 4}, opts);
  ASSERT_EQ(report.rows.size(), 3u);
  EXPECT_EQ(report.rows[2].scenes, 4u);
  EXPECT_EQ(report.rows[0].points, s[0].num_points);
  for (const auto& r : report.rows) {
    EXPECT_GT(r.mean_s, 0.0);
    EXPECT_GT(r.peak_mem_bytes, 0u);
  }
  std::stringstream csv;
  write_bench_csv(csv, report);
  const auto back = read_bench_csv(csv);
  ASSERT_EQ(back.rows.size(), 3u);
  EXPECT_EQ(back.rows[1].batch_size, 2u);
  EXPECT_EQ(back.rows[1].peak_mem_bytes, report.rows[1].peak_mem_bytes);
  std::ostringstream summary;
  write_bench_summary(summary, report);
  EXPECT_FALSE(summary.str().empty());
}

TEST(Bench, BadBatchSizesRejected) {
  const auto s = scenes(2);
  MuGNet model(tiny_model_config(), 3);
  EXPECT_THROW(bench_batched(model, s, {0, 1}), ParameterError);
  EXPECT_THROW(bench_batched(model, s, {1, 3}), ParameterError);
  EXPECT_THROW(bench_batched(model, s, {2, 1}), ParameterError);
  EXPECT_THROW(bench_batched(model, s, {}), ParameterError);
}

TEST(Bench, MalformedCsvRejected) {
  std::istringstream bad_header("a,b\n");
  EXPECT_THROW(read_bench_csv(bad_header), ParseError);
  std::istringstream bad_row("batch_size,scenes,points,mean_s,median_s,peak_mem_bytes\n1,1,x,0,0,0\n");
  try {
    read_bench_csv(bad_row);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Bench, PeakMemoryReadable) {
  EXPECT_GT(peak_rss_bytes(), 0u);
}
