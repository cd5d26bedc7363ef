#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "obtree/error.hpp"
#include "obtree/losses.hpp"
#include "oracles.hpp"

using namespace obtree;

TEST_SUITE("losses") {

TEST_CASE("log loss closed forms") {
  const std::vector<double> zero{0.0, 0.0};
  CHECK(log_loss(zero, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const std::vector<double> flat{3.5, 3.5, 3.5, 3.5};
  for (int y = 1; y <= 4; ++y) CHECK(log_loss(flat, y) == doctest::Approx(std::log(4.0)));
  const std::vector<double> tilted{1.0, 0.0};
  CHECK(log_loss(tilted, 1) == doctest::Approx(std::log1p(std::exp(-1.0))));
  CHECK(log_loss(tilted, 1) == doctest::Approx(0.313262).epsilon(1e-6));
}

TEST_CASE("log-sum-exp survives large magnitudes") {
  const std::vector<double> big{1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)));
  const std::vector<double> tiny{-1000.0, -1001.0};
  CHECK(std::isfinite(log_sum_exp(tiny)));
  const std::vector<double> spread{800.0, -800.0};
  CHECK(log_loss(spread, 2) == doctest::Approx(1600.0));
  CHECK(log_loss(spread, 1) >= 0.0);
  const std::vector<double> bad{0.0, NAN};
  CHECK_THROWS_AS(log_sum_exp(bad), NumericError);
}

TEST_CASE("softmax is shift invariant and normalized") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> theta(5);
    for (auto& v : theta) v = n(rng);
    const auto p = softmax(theta);
    double sum = 0;
    for (double v : p) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
    auto shifted = theta;
    const double c = n(rng) * 10;
    for (auto& v : shifted) v += c;
    const int y = 1 + t % 5;
    CHECK(std::abs(log_loss(shifted, y) - log_loss(theta, y)) < 1e-10);
  }
}

TEST_CASE("log loss gradient") {
  const std::vector<double> zero{0.0, 0.0};
  const auto g = log_loss_grad(zero, 1);
  CHECK(g[0] == doctest::Approx(-0.5));
  CHECK(g[1] == doctest::Approx(0.5));

  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> theta(5);
    for (auto& v : theta) v = n(rng);
    const int y = 1 + t % 5;
    const auto grad = log_loss_grad(theta, y);
    double sum = 0;
    for (std::size_t c = 0; c < theta.size(); ++c) {
      sum += grad[c];
      const double fd =
          oracle::central_difference(theta, c, 1e-5, [&] { return log_loss(theta, y); });
      CHECK(oracle::rel_err(grad[c], fd) < 1e-6);
    }
    CHECK(std::abs(sum) < 1e-12);
  }
}

TEST_CASE("squared loss and gradient") {
  const std::vector<double> a{1.0, 0.0}, z{0.0, 0.0};
  CHECK(sqr_loss(a, z) == 1.0);
  const auto g = sqr_loss_grad(a, z);
  CHECK(g[0] == 2.0);
  CHECK(g[1] == 0.0);
  CHECK(sqr_loss(a, a) == 0.0);
  for (double v : sqr_loss_grad(a, a)) CHECK(v == 0.0);

  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> theta(4), y(4);
    for (auto& v : theta) v = n(rng);
    for (auto& v : y) v = n(rng);
    const auto grad = sqr_loss_grad(theta, y);
    CHECK(sqr_loss(theta, y) >= 0.0);
    for (std::size_t c = 0; c < 4; ++c) {
      const double fd =
          oracle::central_difference(theta, c, 1e-5, [&] { return sqr_loss(theta, y); });
      CHECK(oracle::rel_err(grad[c], fd) < 1e-6);
    }
  }
}

TEST_CASE("label and shape checks") {
  const std::vector<double> theta{0.0, 1.0};
  CHECK_THROWS_AS(log_loss(theta, 0), StructuralError);
  CHECK_THROWS_AS(log_loss(theta, 3), StructuralError);
  const std::vector<double> y3{0.0, 0.0, 0.0};
  CHECK_THROWS_AS(sqr_loss(theta, y3), StructuralError);
  CHECK(parse_loss_kind("log") == LossKind::log);
  CHECK(parse_loss_kind("sqr") == LossKind::squared);
  CHECK_THROWS_AS(parse_loss_kind("hinge"), UsageError);
}

}
