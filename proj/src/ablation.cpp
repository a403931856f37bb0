#include "mugnet/ablation.hpp"

#include <cstdio>
#include <numeric>
#include <ostream>

#include "mugnet/errors.hpp"

namespace mugnet {

std::vector<AblationConfig> standard_ablation_grid(const TrainConfig& base) {
  std::vector<AblationConfig> grid;
  for (std::size_t depth : {7u, 14u, 28u}) {
    TrainConfig t = base;
    t.model.backbone.depth = depth;
    t.model.backbone.taps = {depth};
    t.model.fusion = FusionMode::None;
    grid.push_back({"backbone-" + std::to_string(depth), t});
  }
  TrainConfig stacked = base;
  stacked.model.fusion = FusionMode::BidirectionalWeighted;
  stacked.model.stack = 2;
  grid.push_back({"stacked-2", stacked});

  TrainConfig deep = base;
  deep.model.fusion = FusionMode::BidirectionalWeighted;
  deep.model.backbone.depth = 14;
  deep.model.backbone.taps.clear();
  grid.push_back({"mugnet-14", deep});

  grid.push_back({"baseline", base});
  return grid;
}

std::vector<Fold> make_folds(std::size_t num_scenes, std::size_t k) {
  if (k < 2) throw ParameterError("need at least 2 folds");
  if (k > num_scenes) {
    throw ParameterError(std::to_string(k) + " folds over " + std::to_string(num_scenes) + " scenes");
  }
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < num_scenes; ++i) {
    for (std::size_t f = 0; f < k; ++f) (i % k == f ? folds[f].test : folds[f].train).push_back(i);
  }
  return folds;
}

std::vector<AblationRow> run_ablation(const std::vector<AblationConfig>& grid,
                                      const std::vector<ClusteredScene>& scenes, const std::vector<Fold>& folds,
                                      AbsentClassMode mode) {
  if (grid.empty()) throw ParameterError("ablation grid is empty");
  if (folds.empty()) throw ParameterError("ablation needs at least one fold");
  for (const auto& s : scenes) {
    if (!s.cloud.labels) throw ContractError("ablation scenes must be labeled");
  }
  std::vector<AblationRow> rows;
  for (const auto& entry : grid) {
    entry.train.validate();
    AblationRow row;
    row.name = entry.name;
    row.config = entry.train.to_config();

    std::vector<SceneInput> inputs;
    inputs.reserve(scenes.size());
    for (const auto& s : scenes) inputs.push_back(prepare_scene(s, entry.train.model));

    for (const auto& fold : folds) {
      std::vector<SceneInput> train_set;
      for (auto i : fold.train) train_set.push_back(inputs.at(i));
      auto result = train(train_set, entry.train);
      row.final_loss = result.history.back().loss;

      std::vector<int> pred, truth;
      for (auto i : fold.test) {
        const auto p = infer_points(result.model, inputs.at(i), scenes[i].graph);
        pred.insert(pred.end(), p.begin(), p.end());
        truth.insert(truth.end(), scenes[i].cloud.labels->begin(), scenes[i].cloud.labels->end());
      }
      const auto eval = evaluate(pred, truth, entry.train.model.num_classes, mode);
      row.fold_miou.push_back(eval.miou);
      row.fold_oa.push_back(eval.oa);
    }
    const double n = static_cast<double>(folds.size());
    row.mean_miou = std::accumulate(row.fold_miou.begin(), row.fold_miou.end(), 0.0) / n;
    row.mean_oa = std::accumulate(row.fold_oa.begin(), row.fold_oa.end(), 0.0) / n;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_table(std::ostream& out, const std::vector<AblationRow>& rows) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-4s %-14s %10s %10s\n", "", "config", "mIoU%", "OA%");
  out << buf;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "(%zu)  %-14s %10.1f %10.1f\n", i + 1, rows[i].name.c_str(),
                  100.0 * rows[i].mean_miou, 100.0 * rows[i].mean_oa);
    out << buf;
  }
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "row,config,mean_miou,mean_oa,folds,fold_miou,backbone_depth,fusion,stack\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::string folds;
    for (double v : r.fold_miou) folds += (folds.empty() ? "" : ";") + format_double(v);
    out << i + 1 << ',' << r.name << ',' << format_double(r.mean_miou) << ',' << format_double(r.mean_oa) << ','
        << r.fold_miou.size() << ',' << folds << ',' << r.config.get_string("model.backbone.depth", "") << ','
        << r.config.get_string("model.fusion", "") << ',' << r.config.get_string("model.fusion.stack", "") << '\n';
  }
}

}  // namespace mugnet
