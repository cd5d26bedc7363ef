#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "obtree/dataset.hpp"
#include "obtree/error.hpp"
#include "obtree/greedy.hpp"
#include "obtree/inference.hpp"
#include "oracles.hpp"

using namespace obtree;

namespace {

Dataset line_data(const std::vector<double>& u, const std::vector<int>& labels) {
  std::vector<SparseRow> rows;
  for (double v : u) rows.push_back({{1, v}});
  std::set<int> distinct(labels.begin(), labels.end());
  std::vector<double> classes;
  for (int c = 1; c <= *distinct.rbegin(); ++c) classes.push_back(c);
  return augment(Dataset::classification(1, classes, rows, labels));
}

// Root info gain of a model's first split.
double root_gain(const TreeModel& model, const Dataset& data) {
  std::vector<int> left, right;
  for (std::size_t i = 0; i < data.size(); ++i)
    (sign_of(model.score(1, data.x(i))) > 0 ? right : left).push_back(data.label(i));
  return info_gain(left, right);
}

Dataset tiny_consistent(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::uniform_int_distribution<int> grid(-2, 2);
  std::set<std::pair<int, int>> seen;
  std::vector<SparseRow> rows;
  std::vector<int> labels;
  while (rows.size() < n) {
    const std::pair<int, int> pt{grid(rng), grid(rng)};
    if (!seen.insert(pt).second) continue;
    rows.push_back({{1, double(pt.first)}, {2, double(pt.second)}});
    labels.push_back(1 + int(rng() % k));
  }
  std::vector<double> classes;
  for (std::size_t c = 1; c <= k; ++c) classes.push_back(double(c));
  return augment(Dataset::classification(2, classes, rows, labels));
}

}  // namespace

TEST_SUITE("greedy_init") {

TEST_CASE("information gain values") {
  CHECK(info_gain(std::vector<int>{1, 1}, std::vector<int>{2, 2}) == doctest::Approx(1.0));
  CHECK(info_gain(std::vector<int>{1, 2}, std::vector<int>{1, 2}) == doctest::Approx(0.0));
  CHECK(info_gain(std::vector<int>{1, 1}, std::vector<int>{1, 2}) ==
        doctest::Approx(0.311278).epsilon(1e-6));
  const std::vector<std::size_t> half{2, 2};
  CHECK(entropy_bits(half) == doctest::Approx(1.0));
  const std::vector<std::size_t> pure{5, 0};
  CHECK(entropy_bits(pure) == 0.0);
}

TEST_CASE("laplace frequencies") {
  const std::vector<std::size_t> counts{3, 0, 1};
  const auto theta = laplace_log_frequencies(counts);
  CHECK(theta[0] == doctest::Approx(std::log(4.0 / 7.0)));
  CHECK(theta[1] == doctest::Approx(std::log(1.0 / 7.0)));
  CHECK(theta[2] == doctest::Approx(std::log(2.0 / 7.0)));
}

TEST_CASE("axis split rows route like the threshold") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int t = 0; t < 500; ++t) {
    const AxisSplit split{std::size_t(t % 4), n(rng)};
    const double nu = t % 3 == 0 ? 0.25 : 100.0;
    const auto w = axis_split_row(split, 5, nu);
    CHECK(squared_norm(w) <= nu * (1 + 1e-12));
    std::vector<double> x(5);
    for (auto& v : x) v = n(rng);
    x[4] = -1.0;
    if (x[split.feature] == split.threshold) continue;
    CHECK(sign_of(dot(w, x)) == (x[split.feature] > split.threshold ? 1 : -1));
  }
}

TEST_CASE("two clusters on a line") {
  const Dataset data = line_data({-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0}, {1, 1, 1, 1, 2, 2, 2, 2});
  const auto model = build_axis_aligned(data, 1);
  CHECK(accuracy(model, data) == 1.0);
  const auto w = model.split_row(1);
  CHECK(w[1] / w[0] == doctest::Approx(0.0));
}

TEST_CASE("pure data pads the whole tree") {
  const Dataset data = line_data({-1.0, 0.0, 3.0}, {2, 2, 2});
  for (std::size_t depth : {1, 3}) {
    const auto model = build_axis_aligned(data, depth);
    for (std::size_t node = 1; node <= model.internal_count(); ++node)
      for (double v : model.split_row(node)) CHECK(v == 0.0);
    for (std::size_t j = 1; j <= model.leaf_count(); ++j) {
      CHECK(model.leaf_row(j)[0] == model.leaf_row(1)[0]);
      CHECK(model.leaf_row(j)[1] == model.leaf_row(1)[1]);
    }
    CHECK(accuracy(model, data) == 1.0);
  }
}

TEST_CASE("padded subtrees route right and copy the parent") {
  // The left half is pure after the root split; the right half needs more.
  const Dataset data = line_data({-3, -2, -1, 1, 2, 3, 4}, {1, 1, 1, 2, 2, 1, 1});
  const auto model = build_axis_aligned(data, 3);
  for (std::size_t node : {2, 4, 5})
    for (double v : model.split_row(node)) CHECK(v == 0.0);
  for (std::size_t j = 2; j <= 4; ++j)
    for (std::size_t c = 0; c < 2; ++c) CHECK(model.leaf_row(j)[c] == model.leaf_row(1)[c]);
  const auto expected = laplace_log_frequencies(std::vector<std::size_t>{3, 0});
  CHECK(model.leaf_row(1)[0] == expected[0]);
  CHECK(model.leaf_row(1)[1] == expected[1]);
  for (std::size_t i = 0; i < 3; ++i) CHECK(predict_leaf(model, data.x(i)) == 4);
  CHECK(accuracy(model, data) == 1.0);
}

TEST_CASE("axis trees fit consistent data and never lose accuracy with depth") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + t % 6;
    const Dataset data = tiny_consistent(rng, n, 2 + t % 2);
    double previous = 0.0;
    for (std::size_t depth = 1; depth <= n; ++depth) {
      const double acc = accuracy(build_axis_aligned(data, depth), data);
      CHECK(acc >= previous);
      previous = acc;
    }
    CHECK(previous == 1.0);
  }
}

TEST_CASE("axis splits cannot solve the rotated XOR") {
  const Dataset data = augment(make_rotated_xor(1000, 0.0, 4));
  TreeModel oblique(2, 3, 2);
  const double a = M_PI / 6;
  oblique.weights()(0, 0) = std::cos(a);
  oblique.weights()(0, 1) = std::sin(a);
  for (std::size_t r : {1, 2}) {
    oblique.weights()(r, 0) = -std::sin(a);
    oblique.weights()(r, 1) = std::cos(a);
  }
  oblique.leaf_row(1)[0] = oblique.leaf_row(4)[0] = 1.0;
  oblique.leaf_row(2)[1] = oblique.leaf_row(3)[1] = 1.0;
  CHECK(accuracy(oblique, data) == 1.0);
  CHECK(accuracy(build_axis_aligned(data, 2), data) < 1.0);
}

TEST_CASE("random oblique trees") {
  const Dataset data = augment(make_rotated_xor(300, 0.05, 5));
  const auto a = build_random_oblique(data, 3, 10, 77);
  CHECK(a == build_random_oblique(data, 3, 10, 77));
  CHECK_THROWS_AS(build_random_oblique(data, 3, 0, 77), UsageError);

  // Root candidates are the first draws, so more trials never lowers the root gain.
  double previous = -1.0;
  for (std::size_t trials = 1; trials <= 30; ++trials) {
    const double gain = root_gain(build_random_oblique(data, 1, trials, 9, {4.0, 2}), data);
    CHECK(gain >= previous);
    previous = gain;
  }

  const auto pure_random = build_random_oblique(data, 2, 1, 3, {4.0, 2});
  for (std::size_t node = 1; node <= pure_random.internal_count(); ++node) {
    const double sq = squared_norm(pure_random.split_row(node));
    CHECK((sq == 0.0 || std::abs(sq - 4.0) < 1e-9));
  }
}

TEST_CASE("greedy builders reject unusable data") {
  std::vector<SparseRow> rows{{{1, 1.0}}};
  const Dataset raw = Dataset::classification(1, {1.0}, rows, {1});
  CHECK_THROWS_AS(build_axis_aligned(raw, 2), StructuralError);
  CHECK_THROWS_AS(build_axis_aligned(augment(raw).subset({}), 2), DataError);
}

TEST_CASE("co2 leaves unreached nodes alone") {
  const Dataset data = line_data({1, 2, 3, 4}, {1, 2, 1, 2});
  TreeModel model(2, 2, 2);
  model.weights()(0, 1) = -1.0;  // w.x = +1 for every example: all go right
  model.weights()(1, 0) = 0.3;
  model.weights()(1, 1) = -0.7;
  OptimizerConfig c;
  c.tau = 50;
  const auto refined = co2_refine(model, data, c);
  CHECK(refined.split_row(2)[0] == 0.3);
  CHECK(refined.split_row(2)[1] == -0.7);
}

TEST_CASE("co2 keeps separable data separated") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> u;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
      const double v = n(rng);
      if (std::abs(v) < 0.1) continue;
      u.push_back(v);
      labels.push_back(v > 0 ? 2 : 1);
    }
    const Dataset data = line_data(u, labels);
    const auto init = build_axis_aligned(data, 2);
    OptimizerConfig c;
    c.nu = 4;
    c.seed = t;
    const auto refined = co2_refine(init, data, c, 20);
    CHECK(accuracy(refined, data) >= accuracy(init, data));
  }
}

TEST_CASE("co2 and sgd agree on a single split") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const Dataset data = augment(make_random_linear(400, 5, 2, seed));
    const auto init = build_axis_aligned(data, 1, {4.0, 2});
    OptimizerConfig c;
    c.nu = 4;
    c.eta = 0.1;
    c.seed = seed;
    c.tau = 50 * steps_per_epoch(data.size(), c.batch_size);
    const auto co2 = co2_refine(init, data, c, 50);
    const auto sgd = train_sgd(data, c, init, {nullptr, false}).model;
    const double a = surrogate_loss(co2, data, Inference::exact);
    const double b = surrogate_loss(sgd, data, Inference::exact);
    CHECK(std::abs(a - b) <= 0.05 * b);
  }
}

TEST_CASE("leaf refresh") {
  const Dataset data = line_data({-1, -2, 1}, {1, 1, 2});
  TreeModel model(2, 2, 2);
  model.weights()(0, 0) = 1.0;  // root splits at 0; children are zero rows
  refresh_leaf_parameters(model, data);
  const auto left = laplace_log_frequencies(std::vector<std::size_t>{2, 0});
  const auto right = laplace_log_frequencies(std::vector<std::size_t>{0, 1});
  CHECK(model.leaf_row(2)[0] == left[0]);
  CHECK(model.leaf_row(4)[1] == right[1]);
  for (std::size_t j : {1, 3})
    for (double v : model.leaf_row(j)) CHECK(v == 0.0);
}

}
