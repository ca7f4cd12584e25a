#pragma once

#include <cstddef>
#include <optional>
#include <random>

#include "maq2l/attention.hpp"
#include "maq2l/backbone.hpp"
#include "maq2l/layers.hpp"

namespace maq2l {

struct ModelConfig {
  BackboneConfig backbone;
  AttentionConfig attention;
  std::size_t num_classes = 8;
  std::size_t input_size = 32;
  bool use_mask = true;     // inject A1 into decoder cross-attention
  bool mask_detach = false;  // stop gradient from the decoder into A1

  void validate() const;
};

struct ModelOutput {
  Tensor logits;       // Z, [N]
  Tensor cam_logits;   // A0, [N]
  Tensor features;     // X, [C × H × W]
  AttentionMask mask;  // A1, [HW × N]
};

// Backbone -> {CAM head, encoder} -> masked decoder -> per-label probe.
class Model {
 public:
  Model() = default;
  Model(ModelConfig cfg, std::uint64_t seed);

  ModelOutput forward(const Tensor& image, const ForwardContext& ctx) const;
  // Ordered, stably named parameter list; the first dotted component of each
  // name is its checkpoint section.
  ParamList parameters() const;
  const ModelConfig& config() const { return cfg_; }

  // Copies values (not identity) from another list with identical names and
  // shapes.
  void load_values(const ParamList& source);

  Backbone backbone;
  CamHead cam_head;
  Encoder encoder;
  Decoder decoder;
  LogitProbe logit_probe;

 private:
  ModelConfig cfg_;
};

}  // namespace maq2l
