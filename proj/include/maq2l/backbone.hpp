#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "maq2l/layers.hpp"
#include "maq2l/tensor.hpp"

namespace maq2l {

struct BackboneConfig {
  // channels[0] is the image channel count; one conv stage per later entry.
  std::vector<std::size_t> channels{3, 16, 32, 64};
  std::vector<std::size_t> strides{2, 2, 2};

  std::size_t out_channels() const { return channels.back(); }
  std::size_t total_stride() const;
  // Throws ConfigError when the schedule is malformed or the input does not
  // divide into at least 4 feature tokens.
  Shape feature_shape(std::size_t h, std::size_t w) const;
  void validate() const;
};

// Stack of 3×3 conv + bias + ReLU stages.
class Backbone {
 public:
  Backbone() = default;
  Backbone(BackboneConfig cfg, std::mt19937_64& rng);

  // image: [c × h × w] -> X: [C × H × W]
  Tensor extract_features(const Tensor& image) const;
  void collect(const std::string& prefix, ParamList& out) const;
  const BackboneConfig& config() const { return cfg_; }

  std::vector<Tensor> kernels;
  std::vector<Tensor> biases;

 private:
  BackboneConfig cfg_;
};

// Per-position class scores A1, [HW × N].
struct AttentionMask {
  Tensor values;
  std::size_t positions() const { return values.dim(0); }
  std::size_t classes() const { return values.dim(1); }
};

// GAP + linear classifier whose weights double as CAM projection.
class CamHead {
 public:
  CamHead() = default;
  CamHead(std::size_t channels, std::size_t classes, std::mt19937_64& rng);

  // A0 = GAP(X)·W + b, [N].
  Tensor cam_logits(const Tensor& x) const;
  // A1[p, n] = Σ_c X[c, p]·W[c, n]. The bias is not part of the mask.
  AttentionMask attention_mask(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
  std::size_t classes() const { return weight.dim(1); }

  Tensor weight;  // [C × N]
  Tensor bias;    // [N]
};

// [C × H × W] -> [HW × C]
Tensor spatial_tokens(const Tensor& x);

}  // namespace maq2l
