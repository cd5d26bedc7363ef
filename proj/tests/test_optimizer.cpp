#include <doctest.h>

#include <cmath>
#include <initializer_list>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "obtree/dataset.hpp"
#include "obtree/error.hpp"
#include "obtree/greedy.hpp"
#include "obtree/inference.hpp"
#include "obtree/optimizer.hpp"
#include "oracles.hpp"

using namespace obtree;

namespace {

std::string dump(const TreeModel& model) {
  std::ostringstream out;
  write_model(out, model);
  return out.str();
}

Dataset gaussian_data(std::mt19937_64& rng, std::size_t n, std::size_t p, std::size_t k) {
  return augment(make_random_linear(n, p, k, rng()));
}

// Leaf, flips and routing that determine the surrogate's active pieces.
struct Pieces {
  std::vector<std::size_t> leaves;
  std::vector<std::vector<Flip>> flips;
  std::vector<DecisionVector> signs;
  bool operator==(const Pieces&) const = default;
};

Pieces pieces(const TreeModel& model, const Dataset& data, Inference inf) {
  Pieces p;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = loss_aug_sparse(model, data.example(i), inf);
    p.leaves.push_back(r.leaf);
    p.flips.push_back(r.flips);
    p.signs.push_back(decisions(model.weights(), data.x(i)));
  }
  return p;
}

double mean_surrogate(const TreeModel& model, const Dataset& data, Inference inf,
                      std::span<const std::size_t> assignment) {
  return surrogate_loss(model, data, inf, assignment) / double(data.size());
}

}  // namespace

TEST_SUITE("optimizer") {

TEST_CASE("projection onto the norm ball") {
  std::vector<double> w{2.0, 0.0, 0.0, 0.0};
  project_row(w, 1.0);
  CHECK(w == std::vector<double>{1.0, 0.0, 0.0, 0.0});
  std::vector<double> inside{0.5, 0.5};
  project_row(inside, 1.0);
  CHECK(inside == std::vector<double>{0.5, 0.5});
  CHECK_THROWS_AS(project_row(inside, 0.0), UsageError);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 3.0);
  std::uniform_real_distribution<double> u(0.01, 50.0);
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> v(1 + t % 7);
    for (auto& x : v) x = n(rng);
    const double nu = u(rng);
    const double before = squared_norm(v);
    const auto out = projected_row(v, nu);
    CHECK(std::abs(squared_norm(out) - std::min(before, nu)) < 1e-12 * std::max(1.0, nu));
  }
}

TEST_CASE("config validation") {
  OptimizerConfig c;
  CHECK_NOTHROW(c.validate());
  using Mutation = void (*)(OptimizerConfig&);
  for (Mutation bad : std::initializer_list<Mutation>{[](OptimizerConfig& x) { x.nu = 0; }, [](OptimizerConfig& x) { x.eta = -1; },
                   [](OptimizerConfig& x) { x.batch_size = 0; },
                   [](OptimizerConfig& x) { x.momentum = 1.0; },
                   [](OptimizerConfig& x) { x.ssgd_inner_steps = 0; },
                   [](OptimizerConfig& x) { x.ssgd_rel_improvement = -1; }}) {
    OptimizerConfig b;
    bad(b);
    CHECK_THROWS_AS(b.validate(), UsageError);
  }
  CHECK(parse_algorithm("ssgd") == Algorithm::ssgd);
  CHECK(parse_inference("exact") == Inference::exact);
  CHECK_THROWS_AS(parse_inference("beam"), UsageError);
}

TEST_CASE("no flips leaves W untouched") {
  std::mt19937_64 rng(2);
  const Dataset data = gaussian_data(rng, 20, 3, 2);
  auto model = oracle::random_model(rng, 2, data.dim(), 2, LossKind::log);
  for (std::size_t j = 1; j <= model.leaf_count(); ++j)
    for (double& v : model.leaf_row(j)) v = 0.25;
  const Matrix before = model.weights();
  OptimizerConfig c;
  c.inference = Inference::exact;
  OptimizerState state(model);
  std::vector<std::size_t> batch(data.size());
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  sgd_step(model, data, batch, c, state);
  CHECK(model.weights() == before);
}

TEST_CASE("single squared-loss step moves only the loss-augmented leaf") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<SparseRow> rows{{{1, 0.3}, {2, -0.8}}};
    Matrix y(1, 2);
    y(0, 0) = 0.7;
    y(0, 1) = -1.2;
    const Dataset data = augment(Dataset::regression(2, rows, y));
    auto model = oracle::random_model(rng, 2, 3, 2, LossKind::squared);
    const TreeModel before = model;
    const std::size_t j = exact_loss_aug(model, data.example(0)).leaf;
    OptimizerConfig c;
    c.eta = 0.05;
    c.nu = 1e6;
    c.inference = Inference::exact;
    OptimizerState state(model);
    const std::vector<std::size_t> batch{0};
    sgd_step(model, data, batch, c, state);
    for (std::size_t leaf = 1; leaf <= model.leaf_count(); ++leaf) {
      for (std::size_t q = 0; q < 2; ++q) {
        const double old = before.leaf_row(leaf)[q];
        const double want = leaf == j ? old - 0.05 * 2 * (old - y(0, q)) : old;
        CHECK(model.leaf_row(leaf)[q] == doctest::Approx(want).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("batch subgradient matches finite differences where maximizers are stable") {
  std::mt19937_64 rng(4);
  int checked = 0;
  for (int t = 0; checked < 120 && t < 1000; ++t) {
    const std::size_t d = 1 + t % 3;
    const auto inf = t % 2 ? Inference::exact : Inference::fast;
    const bool stable_mode = t % 3 == 0;
    const Dataset data = gaussian_data(rng, 6, 3, 3);
    auto model = oracle::random_model(rng, d, data.dim(), 3, LossKind::log, 0.7);
    std::vector<std::size_t> assignment;
    if (stable_mode) {
      for (std::size_t i = 0; i < data.size(); ++i)
        assignment.push_back(1 + rng() % model.leaf_count());
    }
    std::vector<std::size_t> batch(data.size());
    std::iota(batch.begin(), batch.end(), std::size_t{0});
    BatchGradient grad(model);
    batch_subgradient(model, data, batch, inf, assignment, grad);
    CHECK(grad.max_rows_per_example <= (stable_mode ? 2 * d : d));

    const double h = 1e-7;
    const Pieces base = pieces(model, data, inf);
    bool stable = true;
    const std::size_t cells = model.weights().data().size();
    Matrix fd_w(model.internal_count(), model.features());
    for (std::size_t e = 0; e < cells && stable; ++e) {
      double& cell = model.weights().data()[e];
      const double saved = cell;
      cell = saved + h;
      const double up = mean_surrogate(model, data, inf, assignment);
      stable = stable && pieces(model, data, inf) == base;
      cell = saved - h;
      const double down = mean_surrogate(model, data, inf, assignment);
      stable = stable && pieces(model, data, inf) == base;
      cell = saved;
      fd_w.data()[e] = (up - down) / (2 * h);
    }
    if (!stable) continue;
    ++checked;
    for (std::size_t e = 0; e < cells; ++e)
      CHECK(oracle::rel_err(grad.weights.dense().data()[e], fd_w.data()[e]) < 1e-4);

    for (std::size_t e = 0; e < model.leaves().data().size(); ++e) {
      double& cell = model.leaves().data()[e];
      const double saved = cell;
      cell = saved + 1e-5;
      const double up = mean_surrogate(model, data, inf, assignment);
      const bool same_up = pieces(model, data, inf) == base;
      cell = saved - 1e-5;
      const double down = mean_surrogate(model, data, inf, assignment);
      const bool same_down = pieces(model, data, inf) == base;
      cell = saved;
      if (same_up && same_down)
        CHECK(oracle::rel_err(grad.leaves.dense().data()[e], (up - down) / 2e-5) < 1e-4);
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("small steps decrease the batch surrogate") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const Dataset data = gaussian_data(rng, 16, 4, 3);
    const auto model = oracle::random_model(rng, 1 + t % 3, data.dim(), 3, LossKind::log);
    std::vector<std::size_t> batch(data.size());
    std::iota(batch.begin(), batch.end(), std::size_t{0});
    const double before = surrogate_loss(model, data, Inference::fast);
    OptimizerConfig c;
    c.nu = 1e6;
    bool decreased = false;
    for (double eta = 1.0; eta > 1e-12 && !decreased; eta /= 2) {
      c.eta = eta;
      TreeModel trial = model;
      OptimizerState state(trial);
      sgd_step(trial, data, batch, c, state);
      decreased = surrogate_loss(trial, data, Inference::fast) <= before;
    }
    CHECK(decreased);
  }
}

TEST_CASE("step size scales the change in the surrogate") {
  std::mt19937_64 rng(6);
  const Dataset data = gaussian_data(rng, 30, 4, 2);
  const auto model = oracle::random_model(rng, 3, data.dim(), 2, LossKind::log);
  std::vector<std::size_t> batch(data.size());
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  const double before = surrogate_loss(model, data, Inference::fast);
  auto change = [&](double eta) {
    OptimizerConfig c;
    c.eta = eta;
    c.nu = 1e6;
    TreeModel trial = model;
    OptimizerState state(trial);
    sgd_step(trial, data, batch, c, state);
    return surrogate_loss(trial, data, Inference::fast) - before;
  };
  const double a = change(1e-6), b = change(1e-7);
  CHECK(a < 0.0);
  CHECK(a / b == doctest::Approx(10.0).epsilon(1e-3));
}

TEST_CASE("non-finite gradients are rejected before any update") {
  std::mt19937_64 rng(7);
  const Dataset data = gaussian_data(rng, 10, 3, 2);
  auto model = oracle::random_model(rng, 2, data.dim(), 2, LossKind::log);
  model.leaf_row(1)[0] = std::numeric_limits<double>::infinity();
  model.leaf_row(2)[0] = std::numeric_limits<double>::infinity();
  model.leaf_row(3)[0] = std::numeric_limits<double>::infinity();
  model.leaf_row(4)[0] = std::numeric_limits<double>::infinity();
  const std::string before = dump(model);
  OptimizerConfig c;
  OptimizerState state(model);
  std::vector<std::size_t> batch{0, 1, 2};
  CHECK_THROWS_AS(sgd_step(model, data, batch, c, state), NumericError);
  CHECK(dump(model) == before);
}

TEST_CASE("first stable step from a fresh assignment equals a fast SGD step") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 30; ++t) {
    const Dataset data = gaussian_data(rng, 40, 4, 3);
    const auto model = oracle::random_model(rng, 3, data.dim(), 3, LossKind::log);
    OptimizerConfig c;
    c.eta = 0.3;
    c.inference = Inference::fast;
    std::vector<std::size_t> batch{0, 3, 5, 7, 11, 19};
    TreeModel a = model, b = model;
    OptimizerState sa(a), sb(b);
    sgd_step(a, data, batch, c, sa);
    const auto assignment = assign_leaves(model, data);
    sgd_step(b, data, batch, c, sb, assignment);
    CHECK(a == b);
  }
}

TEST_CASE("training keeps rows feasible and is deterministic") {
  std::mt19937_64 rng(9);
  const Dataset data = gaussian_data(rng, 300, 5, 3);
  const auto init = oracle::random_model(rng, 3, data.dim(), 3, LossKind::log, 3.0);
  for (auto algo : {Algorithm::sgd, Algorithm::ssgd}) {
    for (double momentum : {0.0, 0.9}) {
      OptimizerConfig c;
      c.algorithm = algo;
      c.nu = 0.5;
      c.eta = 0.5;
      c.tau = 1000;
      c.batch_size = 8;
      c.momentum = momentum;
      c.ssgd_inner_steps = 50;
      c.seed = 42;
      const auto a = train(data, c, init);
      const auto b = train(data, c, init);
      CHECK(a.model == b.model);
      CHECK(a.model.rows_within(0.5));
      CHECK(a.model.all_finite());
      CHECK(a.trace.back().steps == 1000);
    }
  }
  OptimizerConfig zero;
  zero.tau = 0;
  const auto r = train_sgd(data, zero, init);
  // No steps: only the initial projection onto the feasible set is applied.
  TreeModel projected = init;
  for (std::size_t i = 0; i < projected.internal_count(); ++i)
    project_row(projected.weights().row(i), zero.nu);
  CHECK(r.model == projected);
  CHECK_FALSE(r.model == init);
  CHECK(r.trace.size() == 1);
  CHECK(r.selected_epoch == 0);
}

TEST_CASE("stable SGD trace bounds the fast surrogate") {
  std::mt19937_64 rng(10);
  const Dataset data = gaussian_data(rng, 200, 4, 3);
  const auto init = build_axis_aligned(data, 3);
  OptimizerConfig c;
  c.algorithm = Algorithm::ssgd;
  c.tau = 400;
  c.ssgd_inner_steps = 30;
  c.eta = 0.2;
  c.nu = 4;
  const auto r = train_ssgd(data, c, init);
  REQUIRE(r.trace.size() > 2);
  std::size_t last_phase = 0;
  for (const auto& m : r.trace) {
    CHECK(m.surrogate_loss >= m.reference_surrogate - 1e-9);
    CHECK(m.surrogate_loss >= m.empirical_loss - 1e-9);
    CHECK(m.phase >= last_phase);
    CHECK(m.active_leaves >= 1);
    CHECK(m.active_leaves <= 8);
    last_phase = m.phase;
  }
  CHECK(last_phase > 1);
}

TEST_CASE("validation picks the best iterate") {
  std::mt19937_64 rng(11);
  const Dataset data = gaussian_data(rng, 200, 3, 2);
  const Dataset val = gaussian_data(rng, 80, 3, 2);
  const auto init = build_axis_aligned(data, 2);
  OptimizerConfig c;
  c.tau = 60;
  c.eta = 0.5;
  c.nu = 4;
  const auto r = train_sgd(data, c, init, {&val, true});
  double best = -1;
  std::size_t arg = 0;
  for (const auto& m : r.trace) {
    REQUIRE(m.val_accuracy.has_value());
    if (*m.val_accuracy > best) {
      best = *m.val_accuracy;
      arg = m.epoch;
    }
  }
  CHECK(r.selected_epoch == arg);
  CHECK(accuracy(r.model, val) == best);
}

TEST_CASE("depth-2 tree fits the noiseless rotated XOR") {
  const Dataset data = augment(make_rotated_xor(2000, 0.0, 3));
  OptimizerConfig c;
  c.nu = 10;
  c.eta = 0.1;
  c.seed = 1;
  c.tau = 50 * steps_per_epoch(data.size(), c.batch_size);
  const auto init = build_random_oblique(data, 2, 20, 1, {10.0, 2});
  const auto r = train_sgd(data, c, init, {nullptr, false});
  CHECK(accuracy(r.model, data) >= 0.95);
}

}
