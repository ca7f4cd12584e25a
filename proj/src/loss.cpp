#include "maq2l/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "maq2l/error.hpp"

namespace maq2l {

void LossConfig::validate(std::size_t num_classes) const {
  if (gamma_pos < 0.0 || gamma_neg < 0.0) throw ConfigError("focusing parameters must be >= 0");
  if (prob_margin < 0.0 || prob_margin >= 1.0) throw ConfigError("probability margin must lie in [0, 1)");
  if (eps <= 0.0 || eps >= 1.0) throw ConfigError("log clamp eps must lie in (0, 1)");
  if (alpha_mode == AlphaMode::fixed && alpha_value < 1.0) throw ConfigError("static alpha must be >= 1");
  if (alpha_mode == AlphaMode::dynamic && (top_m < 1 || top_m > num_classes)) {
    throw ConfigError("top_m must lie in [1, " + std::to_string(num_classes) + "]");
  }
}

namespace {

struct Probs {
  double p;  // sigmoid(z)
  double q;  // 1 - p, computed without cancellation
};

Probs probs_of(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return {1.0 / (1.0 + e), e / (1.0 + e)};
  }
  const double e = std::exp(z);
  return {e / (1.0 + e), 1.0 / (1.0 + e)};
}

}  // namespace

double asl_binary(double logit, bool positive, const LossConfig& cfg) {
  const auto [p, q] = probs_of(logit);
  if (positive) {
    const double w = std::pow(q, cfg.gamma_pos);
    return -w * std::log(std::max(p, cfg.eps));
  }
  const double pm = std::max(p - cfg.prob_margin, 0.0);
  const double one_minus = cfg.prob_margin == 0.0 ? q : 1.0 - pm;
  const double w = std::pow(pm, cfg.gamma_neg);
  return -w * std::log(std::max(one_minus, cfg.eps));
}

double asl_binary_grad(double logit, bool positive, const LossConfig& cfg) {
  const auto [p, q] = probs_of(logit);
  const double dp_dz = p * q;
  if (positive) {
    const double lp = std::log(std::max(p, cfg.eps));
    const double w = std::pow(q, cfg.gamma_pos);
    const double dw = cfg.gamma_pos > 0.0 ? -cfg.gamma_pos * std::pow(q, cfg.gamma_pos - 1.0) : 0.0;
    const double dlp = p > cfg.eps ? 1.0 / p : 0.0;
    return -(dw * lp + w * dlp) * dp_dz;
  }
  if (p <= cfg.prob_margin) return 0.0;
  const double pm = p - cfg.prob_margin;
  const double one_minus = cfg.prob_margin == 0.0 ? q : 1.0 - pm;
  const double ln = std::log(std::max(one_minus, cfg.eps));
  const double w = std::pow(pm, cfg.gamma_neg);
  const double dw = cfg.gamma_neg > 0.0 ? cfg.gamma_neg * std::pow(pm, cfg.gamma_neg - 1.0) : 0.0;
  const double dln = one_minus > cfg.eps ? -1.0 / one_minus : 0.0;
  return -(dw * ln + w * dln) * dp_dz;
}

namespace {
void check_loss_inputs(const Tensor& logits, const Tensor& targets) {
  if (logits.rank() != 2 || logits.shape() != targets.shape()) {
    throw DimensionError("loss: logits " + shape_str(logits.shape()) + " and targets " + shape_str(targets.shape()) +
                         " must be matching B×N matrices");
  }
  for (double t : targets.data())
    if (t != 0.0 && t != 1.0) throw DimensionError("loss: targets must be binary");
}
}  // namespace

Tensor total_loss(const Tensor& logits, const Tensor& targets, const AlphaVector& alpha, const LossConfig& cfg) {
  check_loss_inputs(logits, targets);
  const std::size_t b = logits.dim(0), n = logits.dim(1);
  if (alpha.size() != n) {
    throw DimensionError("loss: alpha has " + std::to_string(alpha.size()) + " entries for " + std::to_string(n) +
                         " classes");
  }
  auto Z = logits.data();
  auto Y = targets.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < n; ++j) acc += alpha.values[j] * asl_binary(Z[i * n + j], Y[i * n + j] == 1.0, cfg);
  const double inv_b = 1.0 / static_cast<double>(b);
  return Tensor::make_result(
      {}, {acc * inv_b}, "asl_total", {logits},
      [logits, targets, alpha, cfg, b, n, inv_b](std::span<const double> g, std::span<std::vector<double>* const> gi) {
        auto Z = logits.data();
        auto Y = targets.data();
        auto& d = *gi[0];
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < n; ++j)
            d[i * n + j] += g[0] * inv_b * alpha.values[j] * asl_binary_grad(Z[i * n + j], Y[i * n + j] == 1.0, cfg);
      });
}

std::vector<double> per_class_loss(const Tensor& logits, const Tensor& targets, const LossConfig& cfg) {
  check_loss_inputs(logits, targets);
  const std::size_t b = logits.dim(0), n = logits.dim(1);
  auto Z = logits.data();
  auto Y = targets.data();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += asl_binary(Z[i * n + j], Y[i * n + j] == 1.0, cfg);
  for (auto& v : out) v /= static_cast<double>(b);
  return out;
}

AlphaVector static_alpha(const ClassTable& table, double value) {
  const auto members = table.bottleneck_indices();
  if (members.empty()) throw ConfigError("static alpha weighting needs at least one bottleneck class");
  return static_alpha(table.size(), members, value);
}

AlphaVector static_alpha(std::size_t num_classes, std::span<const std::size_t> classes, double value) {
  if (value < 1.0) throw ConfigError("static alpha must be >= 1");
  if (classes.empty()) throw ConfigError("static alpha weighting needs at least one class");
  AlphaVector a = AlphaVector::ones(num_classes);
  for (auto c : classes) {
    if (c >= num_classes) throw ConfigError("alpha class index " + std::to_string(c) + " out of range");
    a.values[c] = value;
  }
  return a;
}

AlphaVector dynamic_alpha(std::span<const double> per_class_ap, std::size_t top_m, double clamp_min) {
  std::vector<std::optional<double>> wrapped(per_class_ap.begin(), per_class_ap.end());
  return dynamic_alpha(std::span<const std::optional<double>>(wrapped), top_m, clamp_min);
}

AlphaVector dynamic_alpha(std::span<const std::optional<double>> per_class_ap, std::size_t top_m, double clamp_min) {
  const std::size_t n = per_class_ap.size();
  if (top_m < 1 || top_m > n) throw ConfigError("top_m must lie in [1, " + std::to_string(n) + "]");
  std::vector<std::size_t> present;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!per_class_ap[i]) continue;
    const double ap = *per_class_ap[i];
    if (!(ap >= 0.0 && ap <= 100.0)) throw ConfigError("per-class AP must be in percent [0, 100]");
    present.push_back(i);
    mean += ap;
  }
  AlphaVector a = AlphaVector::ones(n);
  if (present.empty()) {
    for (auto& v : a.values) v = std::max(v, clamp_min);
    return a;
  }
  mean /= static_cast<double>(present.size());
  std::vector<double> gap(n, 0.0);
  for (auto i : present) gap[i] = mean - *per_class_ap[i];
  std::stable_sort(present.begin(), present.end(), [&](std::size_t x, std::size_t y) { return gap[x] > gap[y]; });
  const std::size_t picked = std::min(top_m, present.size());
  for (std::size_t r = 0; r < picked; ++r) a.values[present[r]] = gap[present[r]] / 10.0;
  for (auto& v : a.values) v = std::max(v, clamp_min);
  return a;
}

}  // namespace maq2l
