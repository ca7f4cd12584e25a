#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maq2l/class_table.hpp"
#include "maq2l/tensor.hpp"

namespace maq2l {

// (1+β²)PR / (β²P + R); 0 when the denominator vanishes.
double f_beta(double precision, double recall, double beta);

struct ClassCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  double precision() const { return tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0; }
  double recall() const { return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0; }
  // No positives and no positive predictions: F-scores are undefined.
  bool vacuous() const { return tp + fp + fn == 0; }
  ClassCounts& operator+=(const ClassCounts& o);
  bool operator==(const ClassCounts&) const = default;
};

struct ConfusionCounts {
  std::vector<ClassCounts> classes;
  ClassCounts normal;  // image-level "no defect" pseudo-class

  ConfusionCounts& operator+=(const ConfusionCounts& o);
  bool operator==(const ConfusionCounts&) const = default;
};

// probs/targets: [B × N]. A prediction is positive when prob >= threshold.
// An image is predicted Normal iff every prob < threshold and labeled Normal
// iff every target is 0.
ConfusionCounts confusion_from_predictions(const Tensor& probs, const Tensor& targets, double threshold = 0.5);

double f1_normal(const ConfusionCounts& counts);

// CIW-weighted mean of per-class F2. Vacuous classes are left out of both
// sums; returns 1 when every class is vacuous.
double f2_ciw(const ConfusionCounts& counts, const ClassTable& table);

struct ScoredLabel {
  double score = 0.0;
  bool positive = false;
};

// Mean of precision@rank over the positives, ranking by descending score
// with ties kept in input order. nullopt when there are no positives.
std::optional<double> average_precision(std::span<const ScoredLabel> scores);

// Per-class AP over the columns of [B × N] probs/targets.
std::vector<std::optional<double>> per_class_ap(const Tensor& probs, const Tensor& targets);

// (v - min) / (max - min). Throws ConfigError on fewer than two values or
// max == min.
std::vector<double> minmax_normalize(std::span<const double> values);

struct ClassReport {
  std::string code;
  ClassCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f2 = 0.0;
  std::optional<double> ap;
};

// All scores are fractions in [0, 1]; the text form reports percent.
struct EvalReport {
  std::vector<ClassReport> classes;
  ClassCounts normal;
  double f1_normal = 0.0;
  double f2_ciw = 0.0;
  double map = 0.0;  // mean over classes with a defined AP
};

EvalReport evaluate(const Tensor& probs, const Tensor& targets, const ClassTable& table, double threshold = 0.5);

// key=value lines: f1_normal, f2_ciw, map, then <CODE>.<field> per class.
std::string report_to_text(const EvalReport& report);
std::string report_to_json(const EvalReport& report);

}  // namespace maq2l
