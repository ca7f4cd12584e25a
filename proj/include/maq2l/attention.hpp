#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "maq2l/backbone.hpp"
#include "maq2l/layers.hpp"
#include "maq2l/tensor.hpp"

namespace maq2l {

// Dropout mode and randomness for one forward pass.
struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;
  double dropout = 0.0;

  Tensor drop(const Tensor& x) const;
};

// Fixed 2D sinusoidal table, [H·W × d]. First d/2 columns encode the row,
// the rest the column; d must be divisible by 4.
Tensor positional_encoding(std::size_t h, std::size_t w, std::size_t d);

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d_model, std::size_t heads, std::mt19937_64& rng);

  // q: [Lq × d], k/v: [Lk × d], mask: [Lq × Lk] added to every head's scaled
  // scores before the softmax. When weights_out is given, receives the
  // per-head attention matrices.
  Tensor forward(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* mask = nullptr,
                 std::vector<Tensor>* weights_out = nullptr) const;
  void collect(const std::string& prefix, ParamList& out) const;
  std::size_t heads() const { return heads_; }

  Linear wq, wk, wv, wo;

 private:
  std::size_t heads_ = 1;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::size_t d_model, std::size_t hidden, std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const { return lin2.forward(relu(lin1.forward(x))); }
  void collect(const std::string& prefix, ParamList& out) const;

  Linear lin1, lin2;
};

class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(std::size_t d_model, std::size_t heads, std::size_t ffn_dim, std::mt19937_64& rng);

  // Self-attention with position added to queries and keys, then FFN; both
  // sublayers post-norm with residual.
  Tensor forward(const Tensor& x, const Tensor& pos, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const;

  MultiHeadAttention self_attn;
  FeedForward ffn;
  LayerNorm norm1, norm2;
};

class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(std::size_t d_model, std::size_t heads, std::size_t ffn_dim, std::size_t labels,
               bool label_self_attention, bool label_pos, std::mt19937_64& rng);

  // q: [N × d]; memory/pos: [HW × d]; mask: [N × HW] or null.
  Tensor forward(const Tensor& q, const Tensor& memory, const Tensor& pos, const Tensor* mask,
                 const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const;

  MultiHeadAttention cross_attn;
  MultiHeadAttention self_attn;
  FeedForward ffn;
  LayerNorm norm1, norm2, norm3;
  Tensor label_bias;  // [N × d], defined only when label_pos
  bool label_self_attention = true;
};

struct AttentionConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t enc_layers = 1;
  std::size_t dec_layers = 2;
  double dropout = 0.1;
  bool label_self_attention = true;
  bool label_pos = false;

  void validate() const;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(std::size_t in_channels, const AttentionConfig& cfg, std::mt19937_64& rng);

  // 1×1 projection C -> d_model per spatial position, flattened to HW tokens.
  Tensor token_embed(const Tensor& x) const;
  // [C × H × W] -> [HW × d_model]
  Tensor encode(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const;

  Linear embed;
  std::vector<EncoderLayer> layers;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(std::size_t labels, const AttentionConfig& cfg, std::mt19937_64& rng);

  // Q_1 = label embedding; a1 (HW × N) is transposed and added to the
  // cross-attention scores of every layer. pos is the positional table of
  // the memory tokens, added to the cross-attention keys. Returns [N × d].
  Tensor decode(const Tensor& f_enc, const Tensor& pos, const std::optional<AttentionMask>& a1,
                const ForwardContext& ctx) const;
  // Layers only; the label embedding is checkpointed as its own section.
  void collect(const std::string& prefix, ParamList& out) const;
  std::size_t labels() const { return label_embedding.dim(0); }

  Tensor label_embedding;  // [N × d]
  std::vector<DecoderLayer> layers;
};

// Per-label linear probe: Z_n = <q_n, w_n> + b_n.
class LogitProbe {
 public:
  LogitProbe() = default;
  LogitProbe(std::size_t labels, std::size_t d_model, std::mt19937_64& rng);

  Tensor project_logits(const Tensor& q) const;
  void collect(const std::string& prefix, ParamList& out) const;

  Tensor weight;  // [N × d]
  Tensor bias;    // [N]
};

}  // namespace maq2l
