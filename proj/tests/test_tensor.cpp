#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "maq2l/error.hpp"
#include "maq2l/tensor.hpp"
#include "test_support.hpp"

using namespace maq2l;
using maq2l::testing::grad_check;
using maq2l::testing::random_tensor;

TEST_CASE("matmul") {
  SUBCASE("identity") {
    auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    auto m = Tensor::from({2, 2}, {3.5, -1, 2, 7});
    CHECK(matmul(eye, m).to_vector() == m.to_vector());
  }
  SUBCASE("hand product") {
    auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
    auto b = Tensor::from({2, 1}, {5, 6});
    auto c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c.to_vector() == std::vector<double>{17, 39});
  }
  SUBCASE("grad of sum is ones times B^T") {
    std::mt19937_64 rng(1);
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({4, 2}, rng, -2, 2, false);
    sum(matmul(a, b)).backward();
    auto B = b.data();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t p = 0; p < 4; ++p) CHECK(a.grad()[i * 4 + p] == doctest::Approx(B[p * 2] + B[p * 2 + 1]));
  }
  SUBCASE("shape mismatch names both shapes") {
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({2, 3});
    try {
      matmul(a, b);
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
    }
  }
}

TEST_CASE("softmax") {
  CHECK(softmax(Tensor::from({2}, {0, 0}), 0).to_vector() == std::vector<double>{0.5, 0.5});
  auto s = softmax(Tensor::from({3}, {1, 2, 3}), 0).to_vector();
  // direct exponentiation
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(s[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
  CHECK(s[0] == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(s[1] == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(s[2] == doctest::Approx(0.66524).epsilon(1e-4));

  std::mt19937_64 rng(2);
  auto x = random_tensor({4, 5}, rng, -2, 2, false);
  auto shifted = Tensor::from({4, 5}, x.to_vector());
  for (auto& v : shifted.mutable_data()) v += 13.25;
  CHECK(testing::max_abs_diff(softmax(x, 1).data(), softmax(shifted, 1).data()) < 1e-14);

  SUBCASE("rows are distributions along either axis") {
    for (std::size_t axis : {0u, 1u}) {
      auto y = softmax(x, axis);
      const std::size_t other = 1 - axis;
      for (std::size_t r = 0; r < x.dim(other); ++r) {
        double total = 0.0;
        for (std::size_t j = 0; j < x.dim(axis); ++j) {
          const double v = axis == 1 ? y[r * 5 + j] : y[j * 5 + r];
          CHECK(v > 0.0);
          CHECK(v < 1.0);
          total += v;
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
      }
    }
  }
  CHECK_THROWS_AS(softmax(Tensor::zeros({2, 0}), 1), DimensionError);
  CHECK_THROWS_AS(softmax(Tensor::zeros({2, 2}), 2), DimensionError);
}

TEST_CASE("sigmoid") {
  CHECK(sigmoid(Tensor::scalar(0)).item() == 0.5);
  CHECK(std::abs(sigmoid(Tensor::scalar(50)).item() - 1.0) < 1e-12);
  CHECK(sigmoid(Tensor::scalar(-800)).item() >= 0.0);
  std::mt19937_64 rng(3);
  auto x = random_tensor({20}, rng, -30, 30, false);
  auto pos = sigmoid(x).to_vector();
  auto neg = sigmoid(scale(x, -1.0)).to_vector();
  for (std::size_t i = 0; i < pos.size(); ++i) CHECK(std::abs(neg[i] - (1.0 - pos[i])) < 1e-15);
}

TEST_CASE("layer_norm") {
  auto ones = Tensor::ones({3});
  auto zeros = Tensor::zeros({3});
  auto c = layer_norm(Tensor::from({1, 3}, {4, 4, 4}), ones, zeros).to_vector();
  for (double v : c) CHECK(v == 0.0);
  auto r = layer_norm(Tensor::from({1, 3}, {1, 2, 3}), ones, zeros).to_vector();
  CHECK(r[0] == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(r[1] == doctest::Approx(0.0));
  CHECK(r[2] == doctest::Approx(1.2247).epsilon(1e-4));

  std::mt19937_64 rng(4);
  auto x = random_tensor({6, 8}, rng, -5, 5, false);
  auto y = layer_norm(x, Tensor::ones({8}), Tensor::zeros({8}));
  for (std::size_t row = 0; row < 6; ++row) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 8; ++j) mean += y[row * 8 + j];
    CHECK(std::abs(mean / 8.0) < 1e-10);
  }
  CHECK_THROWS_AS(layer_norm(Tensor::zeros({3, 1}), Tensor::ones({1}), Tensor::zeros({1})), DimensionError);
}

TEST_CASE("conv2d") {
  std::mt19937_64 rng(5);
  auto x = random_tensor({2, 5, 6}, rng, -2, 2, false);
  CHECK(conv2d(x, Tensor::zeros({3, 2, 3, 3}), 1).to_vector() == std::vector<double>(3 * 5 * 6, 0.0));

  auto single = random_tensor({1, 4, 4}, rng, -2, 2, false);
  std::vector<double> k(9, 0.0);
  k[4] = 1.0;
  CHECK(conv2d(single, Tensor::from({1, 1, 3, 3}, k), 1).to_vector() == single.to_vector());

  // Averaging kernel on a constant map: interior keeps the constant, border
  // pixels see the zero padding.
  auto constant = Tensor::full({1, 5, 5}, 2.0);
  auto avg = conv2d(constant, Tensor::full({1, 1, 3, 3}, 1.0 / 9.0), 1);
  for (std::size_t y = 1; y < 4; ++y)
    for (std::size_t xx = 1; xx < 4; ++xx) CHECK(avg[y * 5 + xx] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(avg[0] == doctest::Approx(2.0 * 4.0 / 9.0));

  CHECK(conv2d(Tensor::zeros({1, 7, 5}), Tensor::zeros({1, 1, 3, 3}), 2).shape() == Shape{1, 4, 3});
  CHECK(conv2d(Tensor::zeros({1, 32, 32}), Tensor::zeros({1, 1, 3, 3}), 2).shape() == Shape{1, 16, 16});
  CHECK_THROWS_AS(conv2d(Tensor::zeros({2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), 1), DimensionError);
}

TEST_CASE("global_avg_pool") {
  CHECK(global_avg_pool(Tensor::full({3, 2, 5}, 1.5)).to_vector() == std::vector<double>{1.5, 1.5, 1.5});
  CHECK(global_avg_pool(Tensor::from({1, 2, 2}, {1, 2, 3, 4})).item() == 2.5);
  auto x = Tensor::zeros({2, 3, 4}, true);
  sum(global_avg_pool(x)).backward();
  for (double g : x.grad()) CHECK(g == doctest::Approx(1.0 / 12.0));
}

TEST_CASE("backward basics") {
  auto x = Tensor::from({3}, {1, -2, 3}, true);
  sum(x).backward();
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[2] == 1.0);

  x.zero_grad();
  sum(mul(x, x)).backward();
  CHECK(x.to_vector() == std::vector<double>{1, -2, 3});
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{2, -4, 6});

  auto loss = sum(mul(x, x));
  loss.backward();
  CHECK_THROWS_AS(loss.backward(), ContractError);
  CHECK_THROWS_AS(mul(x, x).backward(), ContractError);

  NoGradGuard ng;
  CHECK_FALSE(mul(x, x).requires_grad());
}

TEST_CASE("reaching a consumed intermediate is rejected") {
  auto x = Tensor::from({2}, {1, 2}, true);
  auto h = mul(x, x);
  sum(h).backward();
  CHECK_THROWS_AS(sum(scale(h, 2.0)).backward(), ContractError);
}

TEST_CASE("non-finite outputs are errors") {
  auto big = Tensor::from({1}, {1e308});
  CHECK_THROWS_AS(scale(big, 10.0), NumericError);
}

TEST_CASE("finite outputs for inputs up to 1e3") {
  std::mt19937_64 rng(6);
  auto a = random_tensor({4, 4}, rng, -1e3, 1e3, false);
  auto b = random_tensor({4, 4}, rng, -1e3, 1e3, false);
  auto v = random_tensor({4}, rng, -1e3, 1e3, false);
  CHECK_NOTHROW(softmax(a, 1));
  CHECK_NOTHROW(sigmoid(a));
  CHECK_NOTHROW(layer_norm(a, Tensor::ones({4}), v));
  CHECK_NOTHROW(matmul(a, b));
  CHECK_NOTHROW(conv2d(reshape(a, {1, 4, 4}), reshape(random_tensor({9}, rng, -1e3, 1e3, false), {1, 1, 3, 3}), 1));
}

TEST_CASE("gradient check of every op") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> dim(1, 5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = dim(rng), k = dim(rng), n = std::max<std::size_t>(2, dim(rng));
    auto a = random_tensor({m, k}, rng);
    auto b = random_tensor({k, n}, rng);
    auto c = random_tensor({m, n}, rng);
    auto w = random_tensor({m, n}, rng, -2, 2, false);  // fixed projection to a scalar
    auto bias = random_tensor({n}, rng);
    auto gain = random_tensor({n}, rng);
    auto weighted = [&](const Tensor& t) { return sum(mul(t, w)); };

    CHECK(grad_check({a, b}, [&] { return weighted(matmul(a, b)); }).max_rel_error < 1e-4);
    CHECK(grad_check({c}, [&] { return weighted(transpose(transpose(c))); }).max_rel_error < 1e-4);
    CHECK(grad_check({c}, [&] { return weighted(softmax(c, 1)); }).max_rel_error < 1e-4);
    CHECK(grad_check({c}, [&] { return weighted(softmax(c, 0)); }).max_rel_error < 1e-4);
    CHECK(grad_check({c}, [&] { return weighted(sigmoid(c)); }).max_rel_error < 1e-4);
    CHECK(grad_check({c}, [&] { return weighted(relu(c)); }).max_rel_error < 1e-4);
    CHECK(grad_check({c, gain, bias}, [&] { return weighted(layer_norm(c, gain, bias)); }).max_rel_error < 1e-4);
    CHECK(grad_check({c, bias}, [&] { return weighted(add_row_bias(c, bias)); }).max_rel_error < 1e-4);
    auto c2 = random_tensor({m, n}, rng);
    CHECK(grad_check({c, c2}, [&] { return weighted(sub(mul(c, c2), add(c, scale(c2, 0.5)))); }).max_rel_error <
          1e-4);
    if (n >= 2) {
      CHECK(grad_check({c}, [&] {
              std::vector<Tensor> parts{slice_cols(c, 1, n - 1), slice_cols(c, 0, 1)};
              return weighted(concat_cols(parts));
            }).max_rel_error < 1e-4);
    }
    CHECK(grad_check({c}, [&] { return sum(mul(sum_last(c), sum_last(w))); }).max_rel_error < 1e-4);
    CHECK(grad_check({c, c2}, [&] {
            std::vector<Tensor> parts{c, c2};
            return sum(mul(reshape(stack(parts), {2 * m * n}), reshape(stack(std::vector<Tensor>{w, w}), {2 * m * n})));
          }).max_rel_error < 1e-4);

    const std::size_t cin = dim(rng), cout = dim(rng), h = 2 + dim(rng), wd = 2 + dim(rng);
    auto img = random_tensor({cin, h, wd}, rng);
    auto ker = random_tensor({cout, cin, 3, 3}, rng);
    auto cb = random_tensor({cout}, rng);
    for (std::size_t stride : {1u, 2u}) {
      auto probe = Tensor::zeros({1});
      const Shape out_shape{cout, (h + stride - 1) / stride, (wd + stride - 1) / stride};
      auto pw = random_tensor(out_shape, rng, -2, 2, false);
      CHECK(grad_check({img, ker, cb}, [&] { return sum(mul(add_channel_bias(conv2d(img, ker, stride), cb), pw)); })
                .max_rel_error < 1e-4);
    }
    auto gw = random_tensor({cin}, rng, -2, 2, false);
    CHECK(grad_check({img}, [&] { return sum(mul(global_avg_pool(img), gw)); }).max_rel_error < 1e-4);
  }
}

TEST_CASE("composite graph matches finite differences") {
  std::mt19937_64 rng(8);
  auto x = random_tensor({3, 4}, rng);
  auto w1 = random_tensor({4, 4}, rng);
  auto g = random_tensor({4}, rng);
  auto b = random_tensor({4}, rng);
  auto f = [&] {
    auto h = layer_norm(matmul(x, w1), g, b);
    auto att = softmax(matmul(h, transpose(x)), 1);
    return sum(sigmoid(matmul(att, x)));
  };
  CHECK(grad_check({x, w1, g, b}, f).max_rel_error < 1e-4);
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(9);
  auto x = Tensor::ones({1000});
  CHECK(dropout(x, 0.1, false, rng).same_node(x));
  auto y = dropout(x, 0.25, true, rng).to_vector();
  std::size_t zeros = 0;
  for (double v : y) {
    CHECK((v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15));
    zeros += v == 0.0;
  }
  CHECK(zeros > 180);
  CHECK(zeros < 320);
}

TEST_CASE("tensor serialization") {
  std::mt19937_64 rng(10);
  auto t = random_tensor({2, 3, 4}, rng);
  std::stringstream ss;
  save_tensor(ss, t);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "MAQT");
  CHECK(bytes.size() == 4 + 4 + 3 * 8 + 24 * 8);
  CHECK(static_cast<unsigned char>(bytes[4]) == 3);  // little-endian rank
  auto back = load_tensor(ss);
  CHECK(back.shape() == t.shape());
  CHECK(back.to_vector() == t.to_vector());

  std::stringstream bad("NOPE");
  CHECK_THROWS_AS(load_tensor(bad), IoError);
}
