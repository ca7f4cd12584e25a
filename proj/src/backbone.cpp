#include "maq2l/backbone.hpp"

#include "maq2l/error.hpp"

namespace maq2l {

std::size_t BackboneConfig::total_stride() const {
  std::size_t s = 1;
  for (auto v : strides) s *= v;
  return s;
}

void BackboneConfig::validate() const {
  if (channels.size() < 2) throw ConfigError("backbone needs at least one conv stage");
  if (strides.size() != channels.size() - 1) {
    throw ConfigError("backbone stride schedule has " + std::to_string(strides.size()) + " entries for " +
                      std::to_string(channels.size() - 1) + " stages");
  }
  for (auto c : channels)
    if (c == 0) throw ConfigError("backbone channel count must be positive");
  for (auto s : strides)
    if (s == 0) throw ConfigError("backbone stride must be positive");
}

Shape BackboneConfig::feature_shape(std::size_t h, std::size_t w) const {
  validate();
  const std::size_t s = total_stride();
  if (h == 0 || w == 0 || h % s != 0 || w % s != 0) {
    throw ConfigError("input " + std::to_string(h) + "x" + std::to_string(w) +
                      " is not divisible by the backbone stride product " + std::to_string(s));
  }
  const std::size_t fh = h / s, fw = w / s;
  if (fh * fw < 4) throw ConfigError("feature map " + std::to_string(fh) + "x" + std::to_string(fw) + " has fewer than 4 tokens");
  return {out_channels(), fh, fw};
}

Backbone::Backbone(BackboneConfig cfg, std::mt19937_64& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (std::size_t i = 0; i + 1 < cfg_.channels.size(); ++i) {
    kernels.push_back(he_uniform({cfg_.channels[i + 1], cfg_.channels[i], 3, 3}, rng));
    biases.push_back(Tensor::zeros({cfg_.channels[i + 1]}, true));
  }
}

Tensor Backbone::extract_features(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != cfg_.channels.front()) {
    throw DimensionError("backbone expects " + std::to_string(cfg_.channels.front()) + "×h×w input, got " +
                         shape_str(image.shape()));
  }
  cfg_.feature_shape(image.dim(1), image.dim(2));
  Tensor x = image;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    x = relu(add_channel_bias(conv2d(x, kernels[i], cfg_.strides[i]), biases[i]));
  }
  return x;
}

void Backbone::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    out.push_back({prefix + ".stage" + std::to_string(i) + ".kernel", kernels[i]});
    out.push_back({prefix + ".stage" + std::to_string(i) + ".bias", biases[i]});
  }
}

Tensor spatial_tokens(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("expected C×H×W feature map, got " + shape_str(x.shape()));
  return transpose(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}));
}

CamHead::CamHead(std::size_t channels, std::size_t classes, std::mt19937_64& rng)
    : weight(xavier_uniform({channels, classes}, rng)), bias(Tensor::zeros({classes}, true)) {}

Tensor CamHead::cam_logits(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(0) != weight.dim(0)) {
    throw DimensionError("cam head expects " + std::to_string(weight.dim(0)) + " channels, got feature map " +
                         shape_str(x.shape()));
  }
  Tensor pooled = reshape(global_avg_pool(x), {1, x.dim(0)});
  return add_row_bias(reshape(matmul(pooled, weight), {weight.dim(1)}), bias);
}

AttentionMask CamHead::attention_mask(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(0) != weight.dim(0)) {
    throw DimensionError("cam head expects " + std::to_string(weight.dim(0)) + " channels, got feature map " +
                         shape_str(x.shape()));
  }
  return {matmul(spatial_tokens(x), weight)};
}

void CamHead::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

}  // namespace maq2l
