#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mugnet/tensor.hpp"

namespace mugnet {

// Named tensors of a model in registration order. Layer structs hold handles
// to the same storage, so updates through either side are shared.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
  };

  Tensor add(std::string name, Tensor tensor, bool trainable = true);
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor> trainable() const;
  Tensor find(const std::string& name) const;
  std::size_t trainable_count() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

// Seeded weight initialisation; uniform draws use the raw 64-bit engine
// output so values do not depend on the standard library's distributions.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi);
  Tensor xavier(std::size_t fan_in, std::size_t fan_out);
  Tensor uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi);

 private:
  std::mt19937_64 rng_;
};

// y = x W + b
struct Linear {
  Tensor weight;
  Tensor bias;

  Tensor forward(const Tensor& x) const { return add(matmul(x, weight), bias); }
};

Linear make_linear(ParamStore& store, Initializer& init, const std::string& name, std::size_t in,
                   std::size_t out);

}  // namespace mugnet
