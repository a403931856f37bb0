#include "mugnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "mugnet/errors.hpp"

namespace mugnet {

std::string loss_weighting_name(LossWeighting w) {
  return w == LossWeighting::ClusterSize ? "cluster-size" : "uniform";
}

LossWeighting parse_loss_weighting(const std::string& text) {
  if (text == "cluster-size") return LossWeighting::ClusterSize;
  if (text == "uniform") return LossWeighting::Uniform;
  throw ConfigError("unknown loss weighting '" + text + "'");
}

void TrainConfig::validate() const {
  model.validate();
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and nonnegative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam epsilon must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr decay must lie in (0, 1]");
}

std::vector<std::string> TrainConfig::config_keys() {
  std::vector<std::string> keys = ModelConfig::config_keys();
  for (const char* k : {"train.epochs", "train.lr", "train.beta1", "train.beta2", "train.adam_eps", "train.lr_decay",
                        "train.seed", "train.loss_weighting", "train.shuffle"}) {
    keys.emplace_back(k);
  }
  return keys;
}

KvConfig TrainConfig::to_config() const {
  KvConfig c = model.to_config();
  c.add("train.epochs", std::to_string(epochs));
  c.add("train.lr", format_double(lr));
  c.add("train.beta1", format_double(beta1));
  c.add("train.beta2", format_double(beta2));
  c.add("train.adam_eps", format_double(adam_eps));
  c.add("train.lr_decay", format_double(lr_decay));
  c.add("train.seed", std::to_string(seed));
  c.add("train.loss_weighting", loss_weighting_name(weighting));
  c.add("train.shuffle", shuffle ? "true" : "false");
  return c;
}

TrainConfig TrainConfig::from_config(const KvConfig& cfg) {
  TrainConfig t;
  t.model = ModelConfig::from_config(cfg);
  t.epochs = static_cast<int>(cfg.get_int("train.epochs", t.epochs));
  t.lr = cfg.get_double("train.lr", t.lr);
  t.beta1 = cfg.get_double("train.beta1", t.beta1);
  t.beta2 = cfg.get_double("train.beta2", t.beta2);
  t.adam_eps = cfg.get_double("train.adam_eps", t.adam_eps);
  t.lr_decay = cfg.get_double("train.lr_decay", t.lr_decay);
  const long seed = cfg.get_int("train.seed", 0);
  if (seed < 0) throw ConfigError("train.seed must be nonnegative");
  t.seed = static_cast<std::uint64_t>(seed);
  if (auto v = cfg.get("train.loss_weighting")) t.weighting = parse_loss_weighting(*v);
  t.shuffle = cfg.get_bool("train.shuffle", t.shuffle);
  t.validate();
  return t;
}

Tensor cluster_loss(const Tensor& logits, std::span<const int> labels, std::span<const double> sizes,
                    LossWeighting weighting) {
  if (logits.rank() != 2) throw DimensionError("cluster_loss: logits must be a matrix");
  if (labels.size() != logits.rows() || sizes.size() != logits.rows()) {
    throw ContractError("cluster_loss: " + std::to_string(logits.rows()) + " logit rows, " +
                        std::to_string(labels.size()) + " labels, " + std::to_string(sizes.size()) + " sizes");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= logits.cols()) {
      throw ValidationError("cluster label " + std::to_string(l) + " outside [0, " + std::to_string(logits.cols()) +
                            ")");
    }
  }
  if (weighting == LossWeighting::ClusterSize) return weighted_cross_entropy(logits, labels, sizes);
  const std::vector<double> ones(labels.size(), 1.0);
  return weighted_cross_entropy(logits, labels, ones);
}

double cluster_accuracy(const Tensor& logits, std::span<const int> labels) {
  const auto pred = predict_clusters(logits);
  if (pred.size() != labels.size()) throw ContractError("cluster_accuracy: label count mismatch");
  if (pred.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    const auto g = params_[i].grad();
    auto w = params_[i].mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

std::vector<EpochRecord> train_model(MuGNet& model, const std::vector<SceneInput>& scenes, const TrainConfig& cfg) {
  cfg.validate();
  if (scenes.empty()) throw ContractError("train: no scenes");
  for (const auto& s : scenes) {
    if (s.cluster_labels.size() != s.num_clusters()) throw ContractError("train: scene without cluster labels");
  }
  Adam opt(model.params().trainable(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  std::mt19937_64 rng(cfg.seed ^ 0x5eedf00dULL);
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochRecord> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t hits = 0, clusters = 0;
    for (auto idx : order) {
      const auto& s = scenes[idx];
      model.params().zero_grad();
      const Tensor logits = model.forward(s, BatchNormMode::Train);
      const Tensor loss = cluster_loss(logits, s.cluster_labels, s.cluster_sizes, cfg.weighting);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch), epoch);
      }
      loss.backward();
      opt.step();
      loss_sum += value;
      const auto pred = predict_clusters(logits);
      for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == s.cluster_labels[i];
      clusters += pred.size();
    }
    history.push_back({epoch, loss_sum / static_cast<double>(scenes.size()),
                       static_cast<double>(hits) / static_cast<double>(std::max<std::size_t>(clusters, 1))});
    opt.set_lr(opt.lr() * cfg.lr_decay);
  }
  return history;
}

TrainResult train(const std::vector<SceneInput>& scenes, const TrainConfig& cfg) {
  cfg.validate();
  MuGNet model(cfg.model, cfg.seed);
  auto history = train_model(model, scenes, cfg);
  return {std::move(model), std::move(history)};
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,loss,cluster_accuracy\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_double(r.loss) << ',' << format_double(r.cluster_accuracy) << '\n';
  }
}

std::vector<int> infer_points(MuGNet& model, const SceneInput& input, const SuperpointGraph& graph) {
  NoGradGuard guard;
  return predict_points(model.forward(input, BatchNormMode::Eval), graph);
}

}  // namespace mugnet
