#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "maq2l/tensor.hpp"

namespace maq2l {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

// Xavier-uniform leaf of the given shape; fan-in/out from the last two dims
// (or, for conv kernels, channels × receptive field).
Tensor xavier_uniform(const Shape& shape, std::mt19937_64& rng);
// Variance-preserving under ReLU: U(±sqrt(6 / fan_in)).
Tensor he_uniform(const Shape& shape, std::mt19937_64& rng);

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng);

  // x: [rows × in] -> [rows × out]
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;

  Tensor weight;  // [in × out]
  Tensor bias;    // [out]
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);

  Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias); }
  void collect(const std::string& prefix, ParamList& out) const;

  Tensor gain;
  Tensor bias;
};

}  // namespace maq2l
