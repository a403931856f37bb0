#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "mugnet/graph_io.hpp"
#include "mugnet/metrics.hpp"
#include "mugnet/train.hpp"

namespace mugnet {

struct AblationConfig {
  std::string name;
  TrainConfig train;
};

// backbone-7, backbone-14, backbone-28 (no fusion, head on the last block),
// stacked-2 (two bidirectional networks), mugnet-14 (14-block backbone feeding
// fusion from its last four blocks) and baseline (the given config).
std::vector<AblationConfig> standard_ablation_grid(const TrainConfig& base);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Scene i goes to test fold i mod k.
std::vector<Fold> make_folds(std::size_t num_scenes, std::size_t k);

struct AblationRow {
  std::string name;
  KvConfig config;
  std::vector<double> fold_miou;
  std::vector<double> fold_oa;
  double mean_miou = 0.0;
  double mean_oa = 0.0;
  double final_loss = 0.0;  // last epoch of the last fold
};

// Trains and evaluates every config on the same folds; point-level metrics of
// all test scenes of a fold are pooled.
std::vector<AblationRow> run_ablation(const std::vector<AblationConfig>& grid,
                                      const std::vector<ClusteredScene>& scenes, const std::vector<Fold>& folds,
                                      AbsentClassMode mode = AbsentClassMode::Exclude);

void write_ablation_table(std::ostream& out, const std::vector<AblationRow>& rows);
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace mugnet
