#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mugnet/kv_config.hpp"
#include "mugnet/model.hpp"

namespace mugnet {

enum class LossWeighting { ClusterSize, Uniform };

std::string loss_weighting_name(LossWeighting w);
LossWeighting parse_loss_weighting(const std::string& text);

struct TrainConfig {
  ModelConfig model;
  int epochs = 300;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr_decay = 1.0;  // lr multiplied by this after every epoch
  std::uint64_t seed = 0;
  LossWeighting weighting = LossWeighting::ClusterSize;
  bool shuffle = true;

  void validate() const;
  KvConfig to_config() const;
  // Reads model and train.* keys; other keys are ignored so one file can also
  // carry partition settings. Check them with require_known(config_keys()).
  static TrainConfig from_config(const KvConfig& cfg);
  static std::vector<std::string> config_keys();
};

// sum_i w_i CE_i / sum_i w_i with w_i = size_i (or 1). Labels must lie in
// [0, C), otherwise ValidationError.
Tensor cluster_loss(const Tensor& logits, std::span<const int> labels, std::span<const double> sizes,
                    LossWeighting weighting = LossWeighting::ClusterSize);

// Fraction of clusters whose argmax equals the label.
double cluster_accuracy(const Tensor& logits, std::span<const int> labels);

class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps);

  // One update from the gradients currently stored on the parameters.
  void step();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::uint64_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;              // mean over scenes
  double cluster_accuracy = 0.0;  // over all clusters of all scenes
};

struct TrainResult {
  MuGNet model;
  std::vector<EpochRecord> history;
};

// Every scene must carry cluster labels. One optimizer step per scene; the
// scene order is reshuffled from the seed every epoch. Throws DivergenceError
// on a non-finite loss.
TrainResult train(const std::vector<SceneInput>& scenes, const TrainConfig& cfg);

// Continues training an existing model in place.
std::vector<EpochRecord> train_model(MuGNet& model, const std::vector<SceneInput>& scenes, const TrainConfig& cfg);

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

// Point labels from eval-mode inference without gradient tracking.
std::vector<int> infer_points(MuGNet& model, const SceneInput& input, const SuperpointGraph& graph);

}  // namespace mugnet
