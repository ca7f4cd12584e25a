#pragma once

// Dense f64 tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared node. Ops executed while grad mode
// is enabled and at least one input requires grad record a backward closure
// on the output node; Tensor::backward() orders the reachable nodes
// topologically, replays the closures in reverse, and then consumes the
// recorded graph so it cannot be replayed.
//
// Broadcasting is deliberately narrow: add_row_bias (matrix + per-column
// vector), add_channel_bias (C×H×W + per-channel vector) and scale (tensor
// times a constant). Everything else requires identical shapes.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace maq2l {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor;

// Receives d(loss)/d(output) and accumulates into the input gradient buffers.
// A buffer pointer is null when that input does not require grad.
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<std::vector<double>* const> grad_in)>;

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  // Builds the output of a differentiable op. When grad is not needed the
  // closure and inputs are dropped immediately.
  static Tensor make_result(Shape shape, std::vector<double> values, std::string_view op,
                            std::vector<Tensor> inputs, BackwardFn backward);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Only leaves may be written in place (parameter updates, fixtures).
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat_index) const { return data()[flat_index]; }
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  bool is_leaf() const;
  std::string_view op() const;
  // Marks a leaf as trainable.
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Same values, no history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  // Populates grads of every requires_grad leaf reachable from this scalar.
  void backward() const;

  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_row_bias(const Tensor& a, const Tensor& bias);
Tensor add_channel_bias(const Tensor& a, const Tensor& bias);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// 3×3 cross-correlation, padding 1. Output spatial dims ceil(h/stride).
Tensor conv2d(const Tensor& x, const Tensor& kernels, std::size_t stride);
Tensor global_avg_pool(const Tensor& x);
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);
Tensor sum(const Tensor& a);
// Sums the last axis away.
Tensor sum_last(const Tensor& a);
// Inverted dropout: identity when !training or rate == 0.
Tensor dropout(const Tensor& a, double rate, bool training, std::mt19937_64& rng);

// ---- serialization ---------------------------------------------------------
// Layout: "MAQT", u32 rank, rank × u64 dims, numel × f64, all little-endian.

void save_tensor(std::ostream& out, const Tensor& t);
Tensor load_tensor(std::istream& in);

namespace io {
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
}  // namespace io

}  // namespace maq2l
