#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mugnet/model.hpp"

namespace mugnet {

// Several scenes as one disjoint union: cluster rows stacked in scene order,
// node indices of scene s shifted by the node count of scenes before it.
SceneInput union_scenes(const std::vector<const SceneInput*>& scenes);

// Eval-mode logits of each scene, one forward per scene.
std::vector<Tensor> infer_sequential(MuGNet& model, const std::vector<const SceneInput*>& scenes);

// Eval-mode logits of each scene. Scenes are split into `workers` contiguous
// groups (0 = hardware concurrency); each group runs as one union forward on
// its own thread while the parameters are only read.
std::vector<Tensor> infer_batched(MuGNet& model, const std::vector<const SceneInput*>& scenes, std::size_t workers = 0);

struct BenchOptions {
  std::size_t repetitions = 5;
  std::size_t workers = 0;
};

struct BenchRow {
  std::size_t batch_size = 0;
  std::size_t scenes = 0;
  std::size_t points = 0;
  double mean_s = 0.0;
  double median_s = 0.0;
  std::uint64_t peak_mem_bytes = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;

  // mean time of the largest batch over batch_size x mean time of the first row
  double time_ratio_vs_linear() const;
  bool memory_monotone() const;
};

// Batch b uses the first b scenes. Batch sizes must be positive, strictly
// increasing and at most scenes.size().
BenchReport bench_batched(MuGNet& model, const std::vector<SceneInput>& scenes,
                          const std::vector<std::size_t>& batch_sizes, const BenchOptions& opts = {});

// Peak resident set of the process in bytes since the last reset.
std::uint64_t peak_rss_bytes();
// Resets the kernel's peak RSS counter where supported; returns false otherwise.
bool reset_peak_rss();

void write_bench_csv(std::ostream& out, const BenchReport& report);
BenchReport read_bench_csv(std::istream& in);
void write_bench_summary(std::ostream& out, const BenchReport& report);

}  // namespace mugnet
