#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "maq2l/error.hpp"
#include "maq2l/metrics.hpp"

using namespace maq2l;

namespace {

// Precision at each positive's rank, counted by brute force over the ranked list.
double ap_oracle(const std::vector<double>& scores, const std::vector<bool>& pos) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0.0;
  std::size_t hits = 0, positives = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (!pos[order[r]]) continue;
    ++positives;
    std::size_t above = 0;
    for (std::size_t s = 0; s <= r; ++s) above += pos[order[s]];
    hits = above;
    total += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return total / static_cast<double>(positives);
}

// Area under the PR curve with precision replaced by its running maximum
// from the right.
double interpolated_ap(const std::vector<double>& scores, const std::vector<bool>& pos) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<double> prec(n);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < n; ++r) {
    hits += pos[order[r]];
    prec[r] = static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  for (std::size_t r = n - 1; r-- > 0;) prec[r] = std::max(prec[r], prec[r + 1]);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    if (pos[order[r]]) total += prec[r];
  return total / static_cast<double>(hits);
}

std::vector<ScoredLabel> scored(const std::vector<double>& s, const std::vector<bool>& p) {
  std::vector<ScoredLabel> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.push_back({s[i], p[i]});
  return out;
}

ConfusionCounts perfect_only(std::size_t k, std::size_t n) {
  ConfusionCounts c;
  c.classes.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.classes[i] = i == k ? ClassCounts{5, 0, 0, 5} : ClassCounts{0, 3, 4, 3};
  return c;
}

}  // namespace

TEST_CASE("class table") {
  const ClassTable& t = ClassTable::sewer_ml();
  REQUIRE(t.size() == 17);
  const std::vector<std::string> codes{"RB", "OS", "FS", "OB", "OK", "PH", "PB", "OP", "RO",
                                       "IN", "PF", "FO", "BE", "IS", "DE", "GR", "AF"};
  CHECK(t.codes() == codes);
  // Independent addition of the seventeen published weights.
  const double published = 1.0000 + 0.9009 + 0.6419 + 0.5518 + 0.4396 + 0.4167 + 0.4167 + 0.3829 + 0.3559 + 0.3131 +
                           0.2896 + 0.2477 + 0.2275 + 0.1847 + 0.1622 + 0.0901 + 0.0811;
  CHECK(std::abs(t.ciw_sum() - published) < 1e-12);
  CHECK(std::abs(t.ciw_sum() - 6.7024) < 1e-12);
  CHECK(t[1].ciw == 0.9009);
  CHECK(t.bottleneck_indices() == std::vector<std::size_t>{0, 1, 11, 13});
  CHECK(t.subset({"OP", "RB"}).codes() == std::vector<std::string>{"OP", "RB"});
  CHECK_THROWS_AS(t.subset({"XX"}), SchemaError);
  CHECK_THROWS_AS(ClassTable({{"A", "", 0.5, false}, {"A", "", 0.5, false}}), SchemaError);
}

TEST_CASE("f_beta") {
  CHECK(f_beta(1, 1, 2) == 1.0);
  CHECK(f_beta(1, 1, 0.5) == 1.0);
  CHECK(f_beta(0.5, 1, 2) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(f_beta(0, 0, 2) == 0.0);
  for (double p : {0.1, 0.4, 0.9})
    for (double r : {0.2, 0.7}) CHECK(f_beta(p, r, 1) == doctest::Approx(f_beta(r, p, 1)).epsilon(1e-15));
}

TEST_CASE("confusion counts") {
  SUBCASE("hand-built case") {
    // class 0: image 0 TP, image 1 FP, image 2 FN
    const Tensor probs = Tensor::from({3, 2}, {0.9, 0.1, 0.7, 0.2, 0.3, 0.8});
    const Tensor targets = Tensor::from({3, 2}, {1, 0, 0, 0, 1, 1});
    const ConfusionCounts c = confusion_from_predictions(probs, targets);
    CHECK(c.classes[0] == ClassCounts{1, 1, 1, 0});
    CHECK(c.classes[1] == ClassCounts{1, 0, 0, 2});
    // image 1 is labeled Normal but predicted defective
    CHECK(c.normal == ClassCounts{0, 0, 1, 2});
    for (const auto& k : c.classes) CHECK(k.total() == 3);
  }
  SUBCASE("threshold is inclusive") {
    const ConfusionCounts c = confusion_from_predictions(Tensor::from({1, 1}, {0.5}), Tensor::from({1, 1}, {1}));
    CHECK(c.classes[0].tp == 1);
  }
  SUBCASE("perfect predictions") {
    const Tensor t = Tensor::from({3, 2}, {1, 0, 0, 0, 1, 1});
    const ConfusionCounts c = confusion_from_predictions(t, t);
    for (const auto& k : c.classes) CHECK(k.fp + k.fn == 0);
    CHECK(f1_normal(c) == 1.0);
  }
  SUBCASE("all-defect images leave Normal vacuous") {
    const Tensor t = Tensor::from({2, 2}, {1, 0, 0, 1});
    const ConfusionCounts c = confusion_from_predictions(t, t);
    CHECK(c.normal.tp == 0);
    CHECK(c.normal.fp == 0);
  }
  SUBCASE("invariant under batch reordering and additive across shards") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> p(40), y(40);
    for (std::size_t i = 0; i < 40; ++i) {
      p[i] = u(rng);
      y[i] = u(rng) < 0.3;
    }
    const ConfusionCounts all = confusion_from_predictions(Tensor::from({10, 4}, p), Tensor::from({10, 4}, y));
    std::vector<std::size_t> rows(10);
    std::iota(rows.begin(), rows.end(), 0);
    std::shuffle(rows.begin(), rows.end(), rng);
    std::vector<double> ps, ys;
    for (auto r : rows)
      for (std::size_t c = 0; c < 4; ++c) {
        ps.push_back(p[r * 4 + c]);
        ys.push_back(y[r * 4 + c]);
      }
    CHECK(confusion_from_predictions(Tensor::from({10, 4}, ps), Tensor::from({10, 4}, ys)) == all);
    ConfusionCounts a = confusion_from_predictions(Tensor::from({4, 4}, std::vector<double>(ps.begin(), ps.begin() + 16)),
                                                   Tensor::from({4, 4}, std::vector<double>(ys.begin(), ys.begin() + 16)));
    a += confusion_from_predictions(Tensor::from({6, 4}, std::vector<double>(ps.begin() + 16, ps.end())),
                                    Tensor::from({6, 4}, std::vector<double>(ys.begin() + 16, ys.end())));
    CHECK(a == all);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(confusion_from_predictions(Tensor::zeros({2, 3}), Tensor::zeros({2, 2})), DimensionError);
    CHECK_THROWS_AS(confusion_from_predictions(Tensor::zeros({2, 2}), Tensor::zeros({2, 2}), 1.0), ConfigError);
  }
}

TEST_CASE("f2_ciw") {
  const ClassTable& t = ClassTable::sewer_ml();
  SUBCASE("all perfect") {
    ConfusionCounts c;
    c.classes.assign(17, ClassCounts{3, 0, 0, 7});
    CHECK(f2_ciw(c, t) == 1.0);
  }
  SUBCASE("only RB perfect") { CHECK(f2_ciw(perfect_only(0, 17), t) == doctest::Approx(1.0 / 6.7024).epsilon(1e-12)); }
  SUBCASE("every single-class case against a direct sum") {
    for (std::size_t k = 0; k < 17; ++k) {
      double denom = 0.0;
      for (std::size_t i = 0; i < 17; ++i) denom += t[i].ciw;
      CHECK(std::abs(f2_ciw(perfect_only(k, 17), t) - t[k].ciw / denom) < 1e-12);
    }
  }
  SUBCASE("two synthetic classes") {
    const ClassTable two({{"A", "", 1.0, false}, {"B", "", 0.5, false}});
    // F2 = 5PR/(4P+R). Class A: tp 3 fp 0 fn 7 -> P 1, R 0.3 -> 1.5/4.3.
    ConfusionCounts c;
    c.classes = {{3, 0, 7, 0}, {9, 0, 1, 0}};
    const double fa = 5 * 0.3 / (4 + 0.3), fb = 5 * 0.9 / (4 + 0.9);
    CHECK(f2_ciw(c, two) == doctest::Approx((fa + 0.5 * fb) / 1.5).epsilon(1e-14));
  }
  SUBCASE("weighted-mean arithmetic") {
    // F2 {0.6, 0.9} with CIW {1.0, 0.5}
    CHECK((0.6 * 1.0 + 0.9 * 0.5) / 1.5 == doctest::Approx(0.70));
  }
  SUBCASE("vacuous classes are left out") {
    const ClassTable two({{"A", "", 1.0, false}, {"B", "", 0.5, false}});
    ConfusionCounts c;
    c.classes = {{2, 0, 0, 3}, {0, 0, 0, 5}};
    CHECK(f2_ciw(c, two) == 1.0);
    c.classes = {{0, 0, 0, 5}, {0, 0, 0, 5}};
    CHECK(f2_ciw(c, two) == 1.0);
  }
  SUBCASE("class count mismatch") { CHECK_THROWS_AS(f2_ciw(perfect_only(0, 3), t), DimensionError); }
}

TEST_CASE("average precision") {
  SUBCASE("examples") {
    CHECK(*average_precision(scored({0.9, 0.8, 0.1}, {true, true, false})) == 1.0);
    CHECK(*average_precision(scored({0.9, 0.5, 0.1}, {true, false, true})) == doctest::Approx(5.0 / 6.0));
    CHECK(*average_precision(scored({0.1, 0.5, 0.9}, {true, true, true})) == 1.0);
    CHECK_FALSE(average_precision(scored({0.3, 0.2}, {false, false})).has_value());
  }
  SUBCASE("ties keep input order") {
    CHECK(*average_precision(scored({0.5, 0.5}, {false, true})) == doctest::Approx(0.5));
    CHECK(*average_precision(scored({0.5, 0.5}, {true, false})) == 1.0);
  }
  SUBCASE("exhaustive against the rank oracle up to six items") {
    std::size_t cases = 0, differs = 0;
    for (std::size_t n = 1; n <= 6; ++n) {
      for (unsigned mask = 1; mask < (1u << n); ++mask) {
        std::vector<bool> pos(n);
        for (std::size_t i = 0; i < n; ++i) pos[i] = (mask >> i) & 1;
        // every strict order of the scores, plus a version with ties
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        do {
          std::vector<double> s(n);
          for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<double>(perm[i]);
          const double got = *average_precision(scored(s, pos));
          CHECK(std::abs(got - ap_oracle(s, pos)) < 1e-12);
          const double interp = interpolated_ap(s, pos);
          CHECK(interp >= got - 1e-12);
          differs += interp > got + 1e-12;
          ++cases;
          for (auto& x : s) x = std::floor(x / 2);
          CHECK(std::abs(*average_precision(scored(s, pos)) - ap_oracle(s, pos)) < 1e-12);
        } while (std::next_permutation(perm.begin(), perm.end()));
      }
    }
    CHECK(cases > 1000);
    // The two definitions disagree on some orderings; precision is not
    // interpolated here.
    CHECK(differs > 0);
  }
  SUBCASE("per-class AP over columns") {
    const Tensor p = Tensor::from({3, 2}, {0.9, 0.2, 0.5, 0.4, 0.1, 0.3});
    const Tensor y = Tensor::from({3, 2}, {1, 0, 0, 0, 1, 0});
    const auto ap = per_class_ap(p, y);
    REQUIRE(ap.size() == 2);
    CHECK(*ap[0] == doctest::Approx(5.0 / 6.0));
    CHECK_FALSE(ap[1].has_value());
  }
}

TEST_CASE("min-max normalization") {
  SUBCASE("endpoints") {
    const std::vector<double> v{3, 9, 5};
    const auto n = minmax_normalize(v);
    CHECK(n == std::vector<double>{0.0, 1.0, 1.0 / 3.0});
  }
  SUBCASE("sixteenth split defect counts") {
    // RB OB PF DE FS IS RO IN FO PH PB OS OP OK
    const std::vector<double> counts{3299, 12849, 1189, 1045, 21488, 495, 1375, 1833, 433, 1382, 295, 354, 372, 11550};
    const auto n = minmax_normalize(counts);
    CHECK(n[0] == doctest::Approx((3299.0 - 295.0) / (21488.0 - 295.0)).epsilon(1e-15));
    CHECK(n[0] == doctest::Approx(0.14175).epsilon(1e-4));
    CHECK(n[10] == 0.0);
    CHECK(n[4] == 1.0);
  }
  SUBCASE("affine invariance") {
    std::vector<double> v{1, 7, 2, 9, 4};
    std::vector<double> w;
    for (double x : v) w.push_back(3.5 * x - 11.0);
    const auto a = minmax_normalize(v), b = minmax_normalize(w);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-14);
  }
  SUBCASE("degenerate inputs") {
    const std::vector<double> flat{2, 2, 2}, single{1};
    CHECK_THROWS_AS(minmax_normalize(flat), ConfigError);
    CHECK_THROWS_AS(minmax_normalize(single), ConfigError);
  }
}

TEST_CASE("evaluation report") {
  const ClassTable table = ClassTable::sewer_ml().first(3);
  const Tensor probs = Tensor::from({4, 3}, {0.9, 0.1, 0.6, 0.2, 0.8, 0.1, 0.1, 0.2, 0.3, 0.7, 0.4, 0.2});
  const Tensor targets = Tensor::from({4, 3}, {1, 0, 1, 0, 1, 0, 0, 0, 0, 1, 1, 0});
  const EvalReport r = evaluate(probs, targets, table);
  REQUIRE(r.classes.size() == 3);
  CHECK(r.classes[0].code == "RB");
  CHECK(r.classes[0].f2 == 1.0);
  // FS: tp 1 fp 0 fn 1 -> P 1, R 0.5
  CHECK(r.classes[1].f2 == doctest::Approx(f_beta(1.0, 0.5, 2)));
  CHECK(r.normal == ClassCounts{1, 0, 0, 3});
  CHECK(r.f1_normal == 1.0);
  for (const auto& c : r.classes) {
    CHECK(c.f2 >= 0.0);
    CHECK(c.f2 <= 1.0);
  }
  const std::string text = report_to_text(r);
  CHECK(text.rfind("f1_normal=", 0) == 0);
  CHECK(text.find("\nf2_ciw=") != std::string::npos);
  CHECK(text.find("\nmap=") != std::string::npos);
  CHECK(text.find("\nRB.f2=") != std::string::npos);
  const std::string json = report_to_json(r);
  CHECK(json.find("\"f2_ciw\"") != std::string::npos);
}
