#include "maq2l/model.hpp"

#include <algorithm>

#include "maq2l/error.hpp"

namespace maq2l {

void ModelConfig::validate() const {
  backbone.validate();
  attention.validate();
  if (num_classes == 0) throw ConfigError("num_classes must be positive");
  backbone.feature_shape(input_size, input_size);
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  backbone = Backbone(cfg_.backbone, rng);
  cam_head = CamHead(cfg_.backbone.out_channels(), cfg_.num_classes, rng);
  encoder = Encoder(cfg_.backbone.out_channels(), cfg_.attention, rng);
  decoder = Decoder(cfg_.num_classes, cfg_.attention, rng);
  logit_probe = LogitProbe(cfg_.num_classes, cfg_.attention.d_model, rng);
}

ModelOutput Model::forward(const Tensor& image, const ForwardContext& ctx) const {
  ModelOutput out;
  out.features = backbone.extract_features(image);
  out.cam_logits = cam_head.cam_logits(out.features);
  out.mask = cam_head.attention_mask(cfg_.mask_detach ? out.features.detach() : out.features);
  const Tensor f_enc = encoder.encode(out.features, ctx);
  const Tensor pos = positional_encoding(out.features.dim(1), out.features.dim(2), cfg_.attention.d_model);
  const Tensor q = decoder.decode(f_enc, pos, cfg_.use_mask ? std::optional<AttentionMask>(out.mask) : std::nullopt, ctx);
  out.logits = logit_probe.project_logits(q);
  return out;
}

ParamList Model::parameters() const {
  ParamList out;
  backbone.collect("backbone", out);
  cam_head.collect("cam_head", out);
  encoder.collect("encoder", out);
  out.push_back({"label_embedding.weight", decoder.label_embedding});
  decoder.collect("decoder", out);
  logit_probe.collect("logit_probe", out);
  return out;
}

void Model::load_values(const ParamList& source) {
  ParamList own = parameters();
  if (own.size() != source.size()) {
    throw ContractError("parameter count mismatch: model has " + std::to_string(own.size()) + ", source has " +
                        std::to_string(source.size()));
  }
  for (std::size_t i = 0; i < own.size(); ++i) {
    if (own[i].name != source[i].name || own[i].tensor.shape() != source[i].tensor.shape()) {
      throw ContractError("parameter mismatch at " + own[i].name + " " + shape_str(own[i].tensor.shape()) + " vs " +
                          source[i].name + " " + shape_str(source[i].tensor.shape()));
    }
    auto src = source[i].tensor.data();
    std::copy(src.begin(), src.end(), own[i].tensor.mutable_data().begin());
  }
}

}  // namespace maq2l
