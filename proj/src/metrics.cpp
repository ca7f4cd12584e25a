#include "maq2l/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "maq2l/error.hpp"

namespace maq2l {

double f_beta(double precision, double recall, double beta) {
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / denom;
}

ClassCounts& ClassCounts::operator+=(const ClassCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  if (classes.empty()) classes.resize(o.classes.size());
  if (classes.size() != o.classes.size()) throw DimensionError("cannot merge confusion counts of different class counts");
  for (std::size_t i = 0; i < classes.size(); ++i) classes[i] += o.classes[i];
  normal += o.normal;
  return *this;
}

namespace {
void check_pair(const Tensor& probs, const Tensor& targets) {
  if (probs.rank() != 2 || probs.shape() != targets.shape()) {
    throw DimensionError("predictions " + shape_str(probs.shape()) + " and targets " + shape_str(targets.shape()) +
                         " must be matching B×N matrices");
  }
}
}  // namespace

ConfusionCounts confusion_from_predictions(const Tensor& probs, const Tensor& targets, double threshold) {
  check_pair(probs, targets);
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  const std::size_t b = probs.dim(0), n = probs.dim(1);
  auto P = probs.data();
  auto T = targets.data();
  ConfusionCounts out;
  out.classes.resize(n);
  for (std::size_t i = 0; i < b; ++i) {
    bool any_pred = false, any_true = false;
    for (std::size_t j = 0; j < n; ++j) {
      const bool pred = P[i * n + j] >= threshold;
      const bool truth = T[i * n + j] > 0.5;
      any_pred |= pred;
      any_true |= truth;
      auto& c = out.classes[j];
      if (pred && truth) ++c.tp;
      else if (pred) ++c.fp;
      else if (truth) ++c.fn;
      else ++c.tn;
    }
    const bool pred_normal = !any_pred, true_normal = !any_true;
    if (pred_normal && true_normal) ++out.normal.tp;
    else if (pred_normal) ++out.normal.fp;
    else if (true_normal) ++out.normal.fn;
    else ++out.normal.tn;
  }
  return out;
}

double f1_normal(const ConfusionCounts& counts) {
  return f_beta(counts.normal.precision(), counts.normal.recall(), 1.0);
}

double f2_ciw(const ConfusionCounts& counts, const ClassTable& table) {
  if (counts.classes.size() != table.size()) {
    throw DimensionError("confusion counts cover " + std::to_string(counts.classes.size()) + " classes, table has " +
                         std::to_string(table.size()));
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& c = counts.classes[i];
    if (c.vacuous()) continue;
    num += f_beta(c.precision(), c.recall(), 2.0) * table[i].ciw;
    den += table[i].ciw;
  }
  return den > 0.0 ? num / den : 1.0;
}

std::optional<double> average_precision(std::span<const ScoredLabel> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a].score > scores[b].score; });
  std::size_t hits = 0;
  double acc = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!scores[order[rank]].positive) continue;
    ++hits;
    acc += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  if (hits == 0) return std::nullopt;
  return acc / static_cast<double>(hits);
}

std::vector<std::optional<double>> per_class_ap(const Tensor& probs, const Tensor& targets) {
  check_pair(probs, targets);
  const std::size_t b = probs.dim(0), n = probs.dim(1);
  auto P = probs.data();
  auto T = targets.data();
  std::vector<std::optional<double>> out(n);
  std::vector<ScoredLabel> column(b);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < b; ++i) column[i] = {P[i * n + j], T[i * n + j] > 0.5};
    out[j] = average_precision(column);
  }
  return out;
}

std::vector<double> minmax_normalize(std::span<const double> values) {
  if (values.size() < 2) throw ConfigError("min-max normalization needs at least two values");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double mn = *lo, mx = *hi;
  if (mx == mn) throw ConfigError("min-max normalization of a constant list is undefined");
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back((v - mn) / (mx - mn));
  return out;
}

EvalReport evaluate(const Tensor& probs, const Tensor& targets, const ClassTable& table, double threshold) {
  const ConfusionCounts counts = confusion_from_predictions(probs, targets, threshold);
  if (counts.classes.size() != table.size()) {
    throw DimensionError("predictions have " + std::to_string(counts.classes.size()) + " classes, table has " +
                         std::to_string(table.size()));
  }
  const auto aps = per_class_ap(probs, targets);
  EvalReport r;
  double ap_sum = 0.0;
  std::size_t ap_count = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& c = counts.classes[i];
    r.classes.push_back({table[i].code, c, c.precision(), c.recall(), f_beta(c.precision(), c.recall(), 2.0), aps[i]});
    if (aps[i]) {
      ap_sum += *aps[i];
      ++ap_count;
    }
  }
  r.normal = counts.normal;
  r.f1_normal = f1_normal(counts);
  r.f2_ciw = f2_ciw(counts, table);
  r.map = ap_count ? ap_sum / static_cast<double>(ap_count) : 0.0;
  return r;
}

namespace {
std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}
}  // namespace

std::string report_to_text(const EvalReport& r) {
  std::ostringstream os;
  os << "f1_normal=" << pct(r.f1_normal) << '\n';
  os << "f2_ciw=" << pct(r.f2_ciw) << '\n';
  os << "map=" << pct(r.map) << '\n';
  for (const auto& c : r.classes) {
    os << c.code << ".precision=" << pct(c.precision) << '\n';
    os << c.code << ".recall=" << pct(c.recall) << '\n';
    os << c.code << ".f2=" << pct(c.f2) << '\n';
    os << c.code << ".ap=" << (c.ap ? pct(*c.ap) : std::string("absent")) << '\n';
    os << c.code << ".tp=" << c.counts.tp << '\n';
    os << c.code << ".fp=" << c.counts.fp << '\n';
    os << c.code << ".fn=" << c.counts.fn << '\n';
  }
  return os.str();
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["f1_normal"] = r.f1_normal;
  j["f2_ciw"] = r.f2_ciw;
  j["map"] = r.map;
  j["normal"] = {{"tp", r.normal.tp}, {"fp", r.normal.fp}, {"fn", r.normal.fn}, {"tn", r.normal.tn}};
  auto& classes = j["classes"];
  classes = nlohmann::ordered_json::object();
  for (const auto& c : r.classes) {
    nlohmann::ordered_json e;
    e["precision"] = c.precision;
    e["recall"] = c.recall;
    e["f2"] = c.f2;
    e["ap"] = c.ap ? nlohmann::ordered_json(*c.ap) : nlohmann::ordered_json(nullptr);
    e["tp"] = c.counts.tp;
    e["fp"] = c.counts.fp;
    e["fn"] = c.counts.fn;
    e["tn"] = c.counts.tn;
    classes[c.code] = std::move(e);
  }
  return j.dump(2) + "\n";
}

}  // namespace maq2l
