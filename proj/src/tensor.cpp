#include "maq2l/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "maq2l/error.hpp"

namespace maq2l {

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};
}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor of shape " + shape_str(shape) + " cannot hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

void require_rank(const Tensor& t, std::size_t rank, std::string_view op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::ones(Shape shape, bool requires_grad) { return full(std::move(shape), 1.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_numel(shape), value);
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::string_view op, std::vector<Tensor> inputs,
                           BackwardFn backward) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
  }
  auto node = new_node(std::move(shape), std::move(values), false);
  node->op = std::string(op);
  node->leaf = false;
  const bool needs = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                                   [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return shape()[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  shape();
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  shape();
  if (!node_->leaf) throw ContractError("in-place write to non-leaf tensor (op " + node_->op + ")");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && node_->leaf; }

std::string_view Tensor::op() const {
  shape();
  return node_->op;
}

Tensor& Tensor::set_requires_grad(bool flag) {
  shape();
  if (!node_->leaf) throw ContractError("requires_grad can only be set on leaves");
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  shape();
  return node_->grad;
}

void Tensor::zero_grad() {
  shape();
  node_->grad.clear();
}

Tensor Tensor::detach() const {
  shape();
  return Tensor(new_node(node_->shape, node_->data, false));
}

void Tensor::backward() const {
  shape();
  if (numel() != 1) throw ContractError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  if (node_->consumed) throw ContractError("backward() on a graph that was already consumed");
  if (!node_->requires_grad) throw ContractError("backward() on a tensor that does not require grad");
  if (node_->leaf) {
    node_->grad.resize(1, 0.0);
    node_->grad[0] += 1.0;
    return;
  }

  // Iterative post-order DFS; the resulting order is topological.
  std::vector<detail::Node*> order;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  std::unordered_set<detail::Node*> seen;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (n->consumed) throw ContractError("backward() through a consumed graph (op " + n->op + ")");
    if (next < n->inputs.size()) {
      detail::Node* child = n->inputs[next++].get();
      if (child->requires_grad && !child->leaf && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad.assign(1, 1.0);
  std::vector<std::vector<double>*> sinks;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
    sinks.clear();
    for (auto& in : n->inputs) {
      if (in->requires_grad) {
        if (in->grad.empty()) in->grad.assign(in->data.size(), 0.0);
        sinks.push_back(&in->grad);
      } else {
        sinks.push_back(nullptr);
      }
    }
    n->backward(n->grad, sinks);
  }
  for (detail::Node* n : order) {
    n->backward = nullptr;
    n->inputs.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->consumed = true;
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() noexcept { return g_grad_enabled; }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto A = a.data();
  auto B = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return Tensor::make_result({m, n}, std::move(out), "matmul", {a, b},
                             [a, b, m, k, n](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               auto A = a.data();
                               auto B = b.data();
                               if (gi[0]) {
                                 auto& dA = *gi[0];
                                 for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t p = 0; p < k; ++p) {
                                     double acc = 0.0;
                                     for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
                                     dA[i * k + p] += acc;
                                   }
                               }
                               if (gi[1]) {
                                 auto& dB = *gi[1];
                                 for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t p = 0; p < k; ++p) {
                                     const double av = A[i * k + p];
                                     if (av == 0.0) continue;
                                     for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * g[i * n + j];
                                   }
                               }
                             });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  auto A = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return Tensor::make_result({n, m}, std::move(out), "transpose", {a},
                             [m, n](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               auto& d = *gi[0];
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g[j * m + i];
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto A = a.data();
  auto B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  return Tensor::make_result(a.shape(), std::move(out), "add", {a, b},
                             [](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               for (auto* d : gi)
                                 if (d)
                                   for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i];
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto A = a.data();
  auto B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
  return Tensor::make_result(a.shape(), std::move(out), "sub", {a, b},
                             [](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               if (gi[0])
                                 for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                               if (gi[1])
                                 for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] -= g[i];
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto A = a.data();
  auto B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  return Tensor::make_result(a.shape(), std::move(out), "mul", {a, b},
                             [a, b](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               auto A = a.data();
                               auto B = b.data();
                               if (gi[0])
                                 for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * B[i];
                               if (gi[1])
                                 for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] += g[i] * A[i];
                             });
}

Tensor scale(const Tensor& a, double factor) {
  auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * factor;
  return Tensor::make_result(a.shape(), std::move(out), "scale", {a},
                             [factor](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * factor;
                             });
}

Tensor add_row_bias(const Tensor& a, const Tensor& bias) {
  if (a.rank() < 1 || bias.rank() != 1 || bias.dim(0) != a.shape().back()) {
    throw DimensionError("add_row_bias: cannot add " + shape_str(bias.shape()) + " to rows of " +
                         shape_str(a.shape()));
  }
  const std::size_t n = bias.dim(0);
  auto A = a.data();
  auto B = bias.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i % n];
  return Tensor::make_result(a.shape(), std::move(out), "add_row_bias", {a, bias},
                             [n](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               if (gi[0])
                                 for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                               if (gi[1])
                                 for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i % n] += g[i];
                             });
}

Tensor add_channel_bias(const Tensor& a, const Tensor& bias) {
  if (a.rank() != 3 || bias.rank() != 1 || bias.dim(0) != a.dim(0)) {
    throw DimensionError("add_channel_bias: cannot add " + shape_str(bias.shape()) + " to channels of " +
                         shape_str(a.shape()));
  }
  const std::size_t c = a.dim(0), plane = a.dim(1) * a.dim(2);
  auto A = a.data();
  auto B = bias.data();
  std::vector<double> out(A.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < plane; ++p) out[ch * plane + p] = A[ch * plane + p] + B[ch];
  return Tensor::make_result(a.shape(), std::move(out), "add_channel_bias", {a, bias},
                             [c, plane](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               if (gi[0])
                                 for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                               if (gi[1])
                                 for (std::size_t ch = 0; ch < c; ++ch) {
                                   double acc = 0.0;
                                   for (std::size_t p = 0; p < plane; ++p) acc += g[ch * plane + p];
                                   (*gi[1])[ch] += acc;
                                 }
                             });
}

Tensor relu(const Tensor& a) {
  auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] > 0.0 ? A[i] : 0.0;
  return Tensor::make_result(a.shape(), std::move(out), "relu", {a},
                             [a](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               auto A = a.data();
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 if (A[i] > 0.0) (*gi[0])[i] += g[i];
                             });
}

namespace {
double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& a) {
  auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(A[i]);
  auto saved = std::make_shared<std::vector<double>>(out);
  return Tensor::make_result(a.shape(), std::move(out), "sigmoid", {a},
                             [saved](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               const auto& y = *saved;
                               for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * y[i] * (1.0 - y[i]);
                             });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape()));
  }
  const auto& s = a.shape();
  const std::size_t n = s[axis];
  if (n == 0) throw DimensionError("softmax: empty axis in " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = A[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, A[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(A[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  auto saved = std::make_shared<std::vector<double>>(out);
  return Tensor::make_result(
      s, std::move(out), "softmax", {a},
      [saved, outer, inner, n](std::span<const double> g, std::span<std::vector<double>* const> gi) {
        const auto& y = *saved;
        auto& d = *gi[0];
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[base + j * inner] * y[base + j * inner];
            for (std::size_t j = 0; j < n; ++j) {
              const std::size_t idx = base + j * inner;
              d[idx] += y[idx] * (g[idx] - dot);
            }
          }
      });
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  if (a.rank() < 1) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = a.shape().back();
  if (d < 2) throw DimensionError("layer_norm: normalized dimension must be >= 2, got " + shape_str(a.shape()));
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layer_norm: affine shapes " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match " + shape_str(a.shape()));
  }
  const std::size_t rows = a.numel() / d;
  auto A = a.data();
  auto G = gain.data();
  auto B = bias.data();
  std::vector<double> out(A.size());
  auto xhat = std::make_shared<std::vector<double>>(A.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = A.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (x[j] - mean) * inv;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * G[j] + B[j];
    }
  }
  return Tensor::make_result(
      a.shape(), std::move(out), "layer_norm", {a, gain, bias},
      [gain, xhat, rstd, rows, d](std::span<const double> g, std::span<std::vector<double>* const> gi) {
        auto G = gain.data();
        const auto& xh = *xhat;
        if (gi[0]) {
          auto& dx = *gi[0];
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = g[r * d + j] * G[j];
              mean_dh += dh;
              mean_dh_h += dh * xh[r * d + j];
            }
            mean_dh /= static_cast<double>(d);
            mean_dh_h /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = g[r * d + j] * G[j];
              dx[r * d + j] += (*rstd)[r] * (dh - mean_dh - xh[r * d + j] * mean_dh_h);
            }
          }
        }
        if (gi[1])
          for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i % d] += g[i] * xh[i];
        if (gi[2])
          for (std::size_t i = 0; i < g.size(); ++i) (*gi[2])[i % d] += g[i];
      });
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, std::size_t stride) {
  if (x.rank() != 3 || kernels.rank() != 4 || kernels.dim(2) != 3 || kernels.dim(3) != 3) {
    throw DimensionError("conv2d: expected C×H×W input and Cout×Cin×3×3 kernels, got " + shape_str(x.shape()) +
                         " and " + shape_str(kernels.shape()));
  }
  if (kernels.dim(1) != x.dim(0)) {
    throw DimensionError("conv2d: channel mismatch between input " + shape_str(x.shape()) + " and kernels " +
                         shape_str(kernels.shape()));
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2), cout = kernels.dim(0);
  if (h < 3 || w < 3) throw DimensionError("conv2d: spatial dims must be >= 3, got " + shape_str(x.shape()));
  const std::size_t ho = (h + stride - 1) / stride, wo = (w + stride - 1) / stride;
  auto X = x.data();
  auto K = kernels.data();
  std::vector<double> out(cout * ho * wo, 0.0);
  // Input pixel feeding output (oy, ox) through tap (ky, kx).
  auto src = [stride](std::size_t o, std::size_t k) { return static_cast<long>(o * stride + k) - 1; };
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* kk = K.data() + (co * cin + ci) * 9;
      const double* plane = X.data() + ci * h * w;
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const long iy = src(oy, ky);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const long ix = src(ox, kx);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              acc += kk[ky * 3 + kx] * plane[iy * w + ix];
            }
          }
          out[(co * ho + oy) * wo + ox] += acc;
        }
    }
  return Tensor::make_result(
      {cout, ho, wo}, std::move(out), "conv2d", {x, kernels},
      [x, kernels, cin, cout, h, w, ho, wo, src](std::span<const double> g, std::span<std::vector<double>* const> gi) {
        auto X = x.data();
        auto K = kernels.data();
        for (std::size_t co = 0; co < cout; ++co)
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const std::size_t kbase = (co * cin + ci) * 9;
            for (std::size_t oy = 0; oy < ho; ++oy)
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const double go = g[(co * ho + oy) * wo + ox];
                if (go == 0.0) continue;
                for (std::size_t ky = 0; ky < 3; ++ky) {
                  const long iy = src(oy, ky);
                  if (iy < 0 || iy >= static_cast<long>(h)) continue;
                  for (std::size_t kx = 0; kx < 3; ++kx) {
                    const long ix = src(ox, kx);
                    if (ix < 0 || ix >= static_cast<long>(w)) continue;
                    const std::size_t xi = (ci * h + iy) * w + ix;
                    if (gi[0]) (*gi[0])[xi] += go * K[kbase + ky * 3 + kx];
                    if (gi[1]) (*gi[1])[kbase + ky * 3 + kx] += go * X[xi];
                  }
                }
              }
          }
      });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 3, "global_avg_pool");
  const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  if (plane == 0) throw DimensionError("global_avg_pool: empty spatial extent " + shape_str(x.shape()));
  auto X = x.data();
  std::vector<double> out(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t p = 0; p < plane; ++p) acc += X[ch * plane + p];
    out[ch] = acc / static_cast<double>(plane);
  }
  return Tensor::make_result({c}, std::move(out), "global_avg_pool", {x},
                             [c, plane](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               const double inv = 1.0 / static_cast<double>(plane);
                               for (std::size_t ch = 0; ch < c; ++ch)
                                 for (std::size_t p = 0; p < plane; ++p) (*gi[0])[ch * plane + p] += g[ch] * inv;
                             });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return Tensor::make_result(std::move(shape), a.to_vector(), "reshape", {a},
                             [](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                             });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank(a, 2, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (begin + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_str(a.shape()));
  }
  auto A = a.data();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(A.data() + i * n + begin, count, out.data() + i * count);
  return Tensor::make_result({m, count}, std::move(out), "slice_cols", {a},
                             [m, n, begin, count](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               auto& d = *gi[0];
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < count; ++j) d[i * n + begin + j] += g[i * count + j];
                             });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto P = parts[k].data();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(P.data() + i * widths[k], widths[k], out.data() + i * total + offset);
    offset += widths[k];
  }
  return Tensor::make_result({m, total}, std::move(out), "concat_cols", {parts.begin(), parts.end()},
                             [m, total, widths](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               std::size_t offset = 0;
                               for (std::size_t k = 0; k < widths.size(); ++k) {
                                 if (gi[k]) {
                                   auto& d = *gi[k];
                                   for (std::size_t i = 0; i < m; ++i)
                                     for (std::size_t j = 0; j < widths[k]; ++j)
                                       d[i * widths[k] + j] += g[i * total + offset + j];
                                 }
                                 offset += widths[k];
                               }
                             });
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("stack: no inputs");
  const Shape inner = parts[0].shape();
  const std::size_t each = shape_numel(inner);
  std::vector<double> out;
  out.reserve(each * parts.size());
  for (const auto& p : parts) {
    if (p.shape() != inner) {
      throw DimensionError("stack: shape mismatch " + shape_str(inner) + " vs " + shape_str(p.shape()));
    }
    auto P = p.data();
    out.insert(out.end(), P.begin(), P.end());
  }
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return Tensor::make_result(std::move(shape), std::move(out), "stack", {parts.begin(), parts.end()},
                             [each](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               for (std::size_t k = 0; k < gi.size(); ++k)
                                 if (gi[k])
                                   for (std::size_t i = 0; i < each; ++i) (*gi[k])[i] += g[k * each + i];
                             });
}

Tensor sum(const Tensor& a) {
  auto A = a.data();
  double acc = 0.0;
  for (double v : A) acc += v;
  return Tensor::make_result({}, {acc}, "sum", {a},
                             [](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               for (auto& v : *gi[0]) v += g[0];
                             });
}

Tensor sum_last(const Tensor& a) {
  if (a.rank() < 1) throw DimensionError("sum_last: scalar input");
  const std::size_t n = a.shape().back();
  const std::size_t rows = n ? a.numel() / n : 0;
  auto A = a.data();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r] += A[r * n + j];
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  return Tensor::make_result(std::move(shape), std::move(out), "sum_last", {a},
                             [rows, n](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t j = 0; j < n; ++j) (*gi[0])[r * n + j] += g[r];
                             });
}

Tensor dropout(const Tensor& a, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return a;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(a.numel());
  for (auto& m : *mask) m = u(rng) >= rate ? keep_scale : 0.0;
  auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * (*mask)[i];
  return Tensor::make_result(a.shape(), std::move(out), "dropout", {a},
                             [mask](std::span<const double> g, std::span<std::vector<double>* const> gi) {
                               for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * (*mask)[i];
                             });
}

// ---- serialization ---------------------------------------------------------

namespace io {

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  write_u64(out, bits);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("unexpected end of stream");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError("unexpected end of stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace io

void save_tensor(std::ostream& out, const Tensor& t) {
  out.write("MAQT", 4);
  io::write_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) io::write_u64(out, d);
  for (double v : t.data()) io::write_f64(out, v);
  if (!out) throw IoError("failed to write tensor");
}

Tensor load_tensor(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "MAQT", 4) != 0) throw IoError("bad tensor magic");
  const std::uint32_t rank = io::read_u32(in);
  if (rank > 16) throw IoError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = io::read_u64(in);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = io::read_f64(in);
  return Tensor::from(std::move(shape), std::move(values));
}

}  // namespace maq2l
