#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "maq2l/class_table.hpp"
#include "maq2l/tensor.hpp"

namespace maq2l {

enum class AlphaMode { off, fixed, dynamic };

struct LossConfig {
  double gamma_pos = 0.0;
  double gamma_neg = 2.0;
  double prob_margin = 0.05;  // negatives use max(p - margin, 0)
  double eps = 1e-8;          // log clamp

  AlphaMode alpha_mode = AlphaMode::off;
  double alpha_value = 2.0;  // static mode
  std::size_t top_m = 4;     // dynamic mode
  double clamp_min = 1.0;    // dynamic mode

  void validate(std::size_t num_classes) const;
};

// Per-class loss multipliers.
struct AlphaVector {
  std::vector<double> values;

  static AlphaVector ones(std::size_t n) { return {std::vector<double>(n, 1.0)}; }
  std::size_t size() const { return values.size(); }
  bool operator==(const AlphaVector&) const = default;
};

// Asymmetric binary loss of one logit.
double asl_binary(double logit, bool positive, const LossConfig& cfg);
// d asl_binary / d logit.
double asl_binary_grad(double logit, bool positive, const LossConfig& cfg);

// Mean over the batch of Σ_n α_n·asl(Z_bn, y_bn). logits/targets: [B × N].
Tensor total_loss(const Tensor& logits, const Tensor& targets, const AlphaVector& alpha, const LossConfig& cfg);

// Batch-mean unweighted loss of each class, [N] values.
std::vector<double> per_class_loss(const Tensor& logits, const Tensor& targets, const LossConfig& cfg);

// α = value on the table's bottleneck classes, 1 elsewhere.
AlphaVector static_alpha(const ClassTable& table, double value);
// α = value on the listed class indices, 1 elsewhere.
AlphaVector static_alpha(std::size_t num_classes, std::span<const std::size_t> classes, double value);

// Gap-to-mean weighting from per-class AP in percent: Δ_n = mean - AP_n,
// α_n = Δ_n / 10 for the top_m largest gaps (ties by lower index), 1 for the
// rest, then α_n = max(α_n, clamp_min).
AlphaVector dynamic_alpha(std::span<const double> per_class_ap, std::size_t top_m, double clamp_min);
// Same, with classes lacking an AP held at 1 and left out of the mean and
// the ranking.
AlphaVector dynamic_alpha(std::span<const std::optional<double>> per_class_ap, std::size_t top_m, double clamp_min);

}  // namespace maq2l
