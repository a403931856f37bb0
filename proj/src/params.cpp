#include "mugnet/params.hpp"

#include <algorithm>
#include <cmath>

#include "mugnet/errors.hpp"

namespace mugnet {

Tensor ParamStore::add(std::string name, Tensor tensor, bool trainable) {
  if (std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; })) {
    throw ConfigError("duplicate parameter name " + name);
  }
  tensor.set_requires_grad(trainable);
  entries_.push_back({std::move(name), tensor, trainable});
  return tensor;
}

std::vector<Tensor> ParamStore::trainable() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) {
    if (e.trainable) out.push_back(e.tensor);
  }
  return out;
}

std::size_t ParamStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.tensor.numel();
  }
  return n;
}

Tensor ParamStore::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw ContractError("no parameter named " + name);
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

double Initializer::uniform(double lo, double hi) {
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

Tensor Initializer::uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = uniform(lo, hi);
  return Tensor::matrix(rows, cols, std::move(v));
}

Tensor Initializer::xavier(std::size_t fan_in, std::size_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_matrix(fan_in, fan_out, -a, a);
}

Linear make_linear(ParamStore& store, Initializer& init, const std::string& name, std::size_t in,
                   std::size_t out) {
  Linear l;
  l.weight = store.add(name + ".weight", init.xavier(in, out));
  l.bias = store.add(name + ".bias", Tensor::zeros({out}));
  return l;
}

}  // namespace mugnet
