#include "maq2l/attention.hpp"

#include <cmath>
#include <numbers>

#include "maq2l/error.hpp"

namespace maq2l {

Tensor ForwardContext::drop(const Tensor& x) const {
  if (!training || dropout == 0.0) return x;
  if (!rng) throw ContractError("training forward pass without an RNG");
  return maq2l::dropout(x, dropout, true, *rng);
}

Tensor positional_encoding(std::size_t h, std::size_t w, std::size_t d) {
  if (d % 4 != 0) throw ConfigError("positional encoding needs d_model divisible by 4, got " + std::to_string(d));
  const std::size_t half = d / 2;
  std::vector<double> table(h * w * d);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double ey = static_cast<double>(y + 1) / static_cast<double>(h) * two_pi;
      const double ex = static_cast<double>(x + 1) / static_cast<double>(w) * two_pi;
      double* row = table.data() + (y * w + x) * d;
      for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(half));
        row[i] = (i % 2 == 0) ? std::sin(ey / freq) : std::cos(ey / freq);
        row[half + i] = (i % 2 == 0) ? std::sin(ex / freq) : std::cos(ex / freq);
      }
    }
  return Tensor::from({h * w, d}, std::move(table));
}

// ---- MultiHeadAttention ----------------------------------------------------

MultiHeadAttention::MultiHeadAttention(std::size_t d_model, std::size_t heads, std::mt19937_64& rng)
    : wq(d_model, d_model, rng), wk(d_model, d_model, rng), wv(d_model, d_model, rng), wo(d_model, d_model, rng),
      heads_(heads) {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) + " heads");
  }
}

Tensor MultiHeadAttention::forward(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* mask,
                                   std::vector<Tensor>* weights_out) const {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || k.dim(0) != v.dim(0)) {
    throw DimensionError("attention: bad operand shapes q" + shape_str(q.shape()) + " k" + shape_str(k.shape()) +
                         " v" + shape_str(v.shape()));
  }
  const std::size_t lq = q.dim(0), lk = k.dim(0);
  if (mask && mask->shape() != Shape{lq, lk}) {
    throw DimensionError("attention: mask shape " + shape_str(mask->shape()) + " does not match scores " +
                         shape_str({lq, lk}));
  }
  const Tensor qp = wq.forward(q);
  const Tensor kp = wk.forward(k);
  const Tensor vp = wv.forward(v);
  const std::size_t d = qp.dim(1);
  const std::size_t dk = d / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> heads;
  heads.reserve(heads_);
  if (weights_out) weights_out->clear();
  for (std::size_t h = 0; h < heads_; ++h) {
    const Tensor qh = heads_ == 1 ? qp : slice_cols(qp, h * dk, dk);
    const Tensor kh = heads_ == 1 ? kp : slice_cols(kp, h * dk, dk);
    const Tensor vh = heads_ == 1 ? vp : slice_cols(vp, h * dk, dk);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (mask) scores = add(scores, *mask);
    const Tensor weights = softmax(scores, 1);
    if (weights_out) weights_out->push_back(weights);
    heads.push_back(matmul(weights, vh));
  }
  const Tensor merged = heads_ == 1 ? heads.front() : concat_cols(heads);
  return wo.forward(merged);
}

void MultiHeadAttention::collect(const std::string& prefix, ParamList& out) const {
  wq.collect(prefix + ".wq", out);
  wk.collect(prefix + ".wk", out);
  wv.collect(prefix + ".wv", out);
  wo.collect(prefix + ".wo", out);
}

FeedForward::FeedForward(std::size_t d_model, std::size_t hidden, std::mt19937_64& rng)
    : lin1(d_model, hidden, rng), lin2(hidden, d_model, rng) {}

void FeedForward::collect(const std::string& prefix, ParamList& out) const {
  lin1.collect(prefix + ".lin1", out);
  lin2.collect(prefix + ".lin2", out);
}

// ---- layers ----------------------------------------------------------------

EncoderLayer::EncoderLayer(std::size_t d_model, std::size_t heads, std::size_t ffn_dim, std::mt19937_64& rng)
    : self_attn(d_model, heads, rng), ffn(d_model, ffn_dim, rng), norm1(d_model), norm2(d_model) {}

Tensor EncoderLayer::forward(const Tensor& x, const Tensor& pos, const ForwardContext& ctx) const {
  const Tensor qk = add(x, pos);
  const Tensor f0 = self_attn.forward(qk, qk, x);
  const Tensor f1 = norm1.forward(add(x, ctx.drop(f0)));
  return norm2.forward(add(f1, ctx.drop(ffn.forward(f1))));
}

void EncoderLayer::collect(const std::string& prefix, ParamList& out) const {
  self_attn.collect(prefix + ".self_attn", out);
  ffn.collect(prefix + ".ffn", out);
  norm1.collect(prefix + ".norm1", out);
  norm2.collect(prefix + ".norm2", out);
}

DecoderLayer::DecoderLayer(std::size_t d_model, std::size_t heads, std::size_t ffn_dim, std::size_t labels,
                           bool label_self_attention_, bool label_pos, std::mt19937_64& rng)
    : cross_attn(d_model, heads, rng),
      ffn(d_model, ffn_dim, rng),
      norm1(d_model),
      norm2(d_model),
      norm3(d_model),
      label_self_attention(label_self_attention_) {
  if (label_self_attention) self_attn = MultiHeadAttention(d_model, heads, rng);
  if (label_pos) label_bias = Tensor::zeros({labels, d_model}, true);
}

Tensor DecoderLayer::forward(const Tensor& q, const Tensor& memory, const Tensor& pos, const Tensor* mask,
                             const ForwardContext& ctx) const {
  const Tensor ca = cross_attn.forward(q, add(memory, pos), memory, mask);
  const Tensor qt = norm1.forward(add(q, ctx.drop(ca)));
  Tensor qt1 = qt;
  if (label_self_attention) {
    const Tensor qk = label_bias.defined() ? add(qt, label_bias) : qt;
    qt1 = norm2.forward(add(qt, ctx.drop(self_attn.forward(qk, qk, qt))));
  }
  return norm3.forward(add(qt1, ctx.drop(ffn.forward(qt1))));
}

void DecoderLayer::collect(const std::string& prefix, ParamList& out) const {
  cross_attn.collect(prefix + ".cross_attn", out);
  if (label_self_attention) self_attn.collect(prefix + ".self_attn", out);
  ffn.collect(prefix + ".ffn", out);
  norm1.collect(prefix + ".norm1", out);
  norm2.collect(prefix + ".norm2", out);
  norm3.collect(prefix + ".norm3", out);
  if (label_bias.defined()) out.push_back({prefix + ".label_bias", label_bias});
}

void AttentionConfig::validate() const {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (d_model % 4 != 0) throw ConfigError("d_model must be divisible by 4 for the 2D positional encoding");
  if (ffn_dim == 0) throw ConfigError("ffn_dim must be positive");
  if (dec_layers == 0) throw ConfigError("at least one decoder layer is required");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

// ---- encoder / decoder -----------------------------------------------------

Encoder::Encoder(std::size_t in_channels, const AttentionConfig& cfg, std::mt19937_64& rng)
    : embed(in_channels, cfg.d_model, rng) {
  cfg.validate();
  for (std::size_t i = 0; i < cfg.enc_layers; ++i) layers.emplace_back(cfg.d_model, cfg.heads, cfg.ffn_dim, rng);
}

Tensor Encoder::token_embed(const Tensor& x) const { return embed.forward(spatial_tokens(x)); }

Tensor Encoder::encode(const Tensor& x, const ForwardContext& ctx) const {
  Tensor tokens = token_embed(x);
  const Tensor pos = positional_encoding(x.dim(1), x.dim(2), tokens.dim(1));
  for (const auto& layer : layers) tokens = layer.forward(tokens, pos, ctx);
  return tokens;
}

void Encoder::collect(const std::string& prefix, ParamList& out) const {
  embed.collect(prefix + ".embed", out);
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".layer" + std::to_string(i), out);
}

Decoder::Decoder(std::size_t labels, const AttentionConfig& cfg, std::mt19937_64& rng)
    : label_embedding(xavier_uniform({labels, cfg.d_model}, rng)) {
  cfg.validate();
  for (std::size_t i = 0; i < cfg.dec_layers; ++i) {
    layers.emplace_back(cfg.d_model, cfg.heads, cfg.ffn_dim, labels, cfg.label_self_attention, cfg.label_pos, rng);
  }
}

Tensor Decoder::decode(const Tensor& f_enc, const Tensor& pos, const std::optional<AttentionMask>& a1,
                       const ForwardContext& ctx) const {
  if (f_enc.rank() != 2 || f_enc.dim(1) != label_embedding.dim(1)) {
    throw DimensionError("decoder memory " + shape_str(f_enc.shape()) + " does not match label embedding " +
                         shape_str(label_embedding.shape()));
  }
  const std::size_t hw = f_enc.dim(0);
  std::optional<Tensor> mask;
  if (a1) {
    if (a1->values.shape() != Shape{hw, labels()}) {
      throw DimensionError("attention mask " + shape_str(a1->values.shape()) + " does not match " +
                           std::to_string(hw) + " tokens × " + std::to_string(labels()) + " labels");
    }
    mask = transpose(a1->values);
  }
  if (pos.shape() != f_enc.shape()) {
    throw DimensionError("decoder key positions " + shape_str(pos.shape()) + " do not match memory " +
                         shape_str(f_enc.shape()));
  }
  Tensor q = label_embedding;
  for (const auto& layer : layers) q = layer.forward(q, f_enc, pos, mask ? &*mask : nullptr, ctx);
  return q;
}

void Decoder::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".layer" + std::to_string(i), out);
}

LogitProbe::LogitProbe(std::size_t labels, std::size_t d_model, std::mt19937_64& rng)
    : weight(xavier_uniform({labels, d_model}, rng)), bias(Tensor::zeros({labels}, true)) {}

Tensor LogitProbe::project_logits(const Tensor& q) const {
  if (q.shape() != weight.shape()) {
    throw DimensionError("logit probe expects " + shape_str(weight.shape()) + ", got " + shape_str(q.shape()));
  }
  return add_row_bias(sum_last(mul(q, weight)), bias);
}

void LogitProbe::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

}  // namespace maq2l
