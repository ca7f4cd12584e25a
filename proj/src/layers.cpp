#include "maq2l/layers.hpp"

#include <cmath>
#include <utility>

#include "maq2l/error.hpp"

namespace maq2l {

namespace {

std::pair<std::size_t, std::size_t> fans(const Shape& shape) {
  if (shape.empty()) throw DimensionError("weight init: scalar shape");
  if (shape.size() == 4) {
    // conv: [cout × cin × kh × kw]
    const std::size_t field = shape[2] * shape[3];
    return {shape[1] * field, shape[0] * field};
  }
  return {shape.size() == 1 ? shape[0] : shape[shape.size() - 2], shape.back()};
}

Tensor uniform_leaf(const Shape& shape, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(shape, std::move(values), true);
}

}  // namespace

Tensor xavier_uniform(const Shape& shape, std::mt19937_64& rng) {
  const auto [fan_in, fan_out] = fans(shape);
  return uniform_leaf(shape, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

Tensor he_uniform(const Shape& shape, std::mt19937_64& rng) {
  return uniform_leaf(shape, std::sqrt(6.0 / static_cast<double>(fans(shape).first)), rng);
}

Linear::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight(xavier_uniform({in, out}, rng)), bias(Tensor::zeros({out}, true)) {}

Tensor Linear::forward(const Tensor& x) const { return add_row_bias(matmul(x, weight), bias); }

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNorm::LayerNorm(std::size_t dim) : gain(Tensor::ones({dim}, true)), bias(Tensor::zeros({dim}, true)) {}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

}  // namespace maq2l
