#include "obtree/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "obtree/error.hpp"

namespace obtree {

std::string_view to_string(Algorithm a) { return a == Algorithm::sgd ? "sgd" : "ssgd"; }
std::string_view to_string(Inference i) { return i == Inference::exact ? "exact" : "fast"; }

Algorithm parse_algorithm(std::string_view text) {
  if (text == "sgd") return Algorithm::sgd;
  if (text == "ssgd") return Algorithm::ssgd;
  throw UsageError("unknown algorithm '" + std::string(text) + "'");
}

Inference parse_inference(std::string_view text) {
  if (text == "exact") return Inference::exact;
  if (text == "fast") return Inference::fast;
  throw UsageError("unknown inference '" + std::string(text) + "'");
}

void OptimizerConfig::validate() const {
  if (!(nu > 0.0) || !std::isfinite(nu)) throw UsageError("nu must be positive");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw UsageError("learning rate must be positive");
  if (batch_size == 0) throw UsageError("batch size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw UsageError("momentum must be in [0, 1)");
  if (ssgd_inner_steps == 0) throw UsageError("ssgd inner steps must be positive");
  if (!(ssgd_rel_improvement >= 0.0)) throw UsageError("ssgd improvement must be >= 0");
}

void project_row(std::span<double> w, double nu) {
  if (!(nu > 0.0)) throw UsageError("nu must be positive");
  const double sq = squared_norm(w);
  if (sq <= nu) return;
  const double scale = std::sqrt(nu / sq);
  for (double& v : w) v *= scale;
}

std::vector<double> projected_row(std::span<const double> w, double nu) {
  std::vector<double> out(w.begin(), w.end());
  project_row(out, nu);
  return out;
}

std::span<double> SparseRows::touch(std::size_t r) {
  if (!touched_[r]) {
    touched_[r] = 1;
    rows_.push_back(r);
  }
  return values_.row(r);
}

void SparseRows::clear() {
  for (auto r : rows_) {
    auto row = values_.row(r);
    std::fill(row.begin(), row.end(), 0.0);
    touched_[r] = 0;
  }
  rows_.clear();
}

void accumulate_example(const TreeModel& model, const ExampleRef& ex, Inference inference,
                        std::optional<std::size_t> assignment, double scale,
                        BatchGradient& grad) {
  const auto aug = loss_aug_sparse(model, ex, inference);

  // Coefficients of (g - h) on the rows where they differ; both are stated
  // relative to sign(Wx), so each flip contributes 2 * (its bit).
  std::vector<std::pair<std::size_t, double>> coef;
  coef.reserve(2 * model.depth());
  for (const auto& f : aug.flips) coef.emplace_back(f.node, 2.0 * f.bit);
  if (assignment) {
    for (const auto& f : constrained_sparse(model, ex.x, *assignment).flips) {
      auto it = std::find_if(coef.begin(), coef.end(),
                             [&](const auto& c) { return c.first == f.node; });
      if (it != coef.end())
        it->second -= 2.0 * f.bit;
      else
        coef.emplace_back(f.node, -2.0 * f.bit);
    }
  }
  std::size_t rows = 0;
  for (const auto& [node, c] : coef) {
    if (c == 0.0) continue;
    ++rows;
    auto row = grad.weights.touch(node - 1);
    const double a = scale * c;
    for (std::size_t f = 0; f < row.size(); ++f) row[f] += a * ex.x[f];
  }
  grad.max_rows_per_example = std::max(grad.max_rows_per_example, rows);

  std::vector<double> g(model.classes());
  loss_gradient(model.task(), model.leaf_row(aug.leaf), ex, g);
  auto row = grad.leaves.touch(aug.leaf - 1);
  for (std::size_t c = 0; c < g.size(); ++c) row[c] += scale * g[c];
}

void batch_subgradient(const TreeModel& model, const Dataset& data,
                       std::span<const std::size_t> batch, Inference inference,
                       std::span<const std::size_t> assignment, BatchGradient& grad) {
  if (batch.empty()) throw UsageError("empty batch");
  if (!assignment.empty() && assignment.size() != data.size())
    throw StructuralError("assignment must have one leaf per example");
  grad.weights.clear();
  grad.leaves.clear();
  grad.max_rows_per_example = 0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (auto i : batch) {
    std::optional<std::size_t> a;
    if (!assignment.empty()) a = assignment[i];
    accumulate_example(model, data.example(i), inference, a, scale, grad);
  }
}

OptimizerState::OptimizerState(const TreeModel& model)
    : gradient(model),
      weight_velocity(model.internal_count(), model.features()),
      leaf_velocity(model.leaf_count(), model.classes()) {}

namespace {

bool rows_finite(const SparseRows& rows) {
  for (auto r : rows.touched_rows())
    for (double v : rows.row(r))
      if (!std::isfinite(v)) return false;
  return true;
}

void apply_velocity(SparseRows& velocity, const SparseRows& grad, Matrix& params,
                    const OptimizerConfig& config, bool project) {
  if (config.momentum == 0.0) velocity.clear();
  for (auto r : grad.touched_rows()) velocity.touch(r);
  for (auto r : velocity.touched_rows()) {
    auto v = velocity.touch(r);
    auto g = grad.row(r);
    auto p = params.row(r);
    for (std::size_t c = 0; c < v.size(); ++c) {
      v[c] = config.momentum * v[c] - config.eta * g[c];
      p[c] += v[c];
      if (!std::isfinite(p[c])) throw NumericError("parameter overflow after update");
    }
    if (project) project_row(p, config.nu);
  }
}

}  // namespace

void sgd_step(TreeModel& model, const Dataset& data, std::span<const std::size_t> batch,
              const OptimizerConfig& config, OptimizerState& state,
              std::span<const std::size_t> assignment) {
  batch_subgradient(model, data, batch, config.inference, assignment, state.gradient);
  if (!rows_finite(state.gradient.weights) || !rows_finite(state.gradient.leaves))
    throw NumericError("non-finite gradient; step rejected");
  apply_velocity(state.weight_velocity, state.gradient.weights, model.weights(), config, true);
  apply_velocity(state.leaf_velocity, state.gradient.leaves, model.leaves(), config, false);
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size) {
  return (n + batch_size - 1) / batch_size;
}

namespace {

using Clock = std::chrono::steady_clock;

TrainResult run_training(const Dataset& data, const OptimizerConfig& config, TreeModel init,
                         const TrainOptions& options, bool stable) {
  config.validate();
  if (data.empty()) throw DataError("training set is empty");
  check_compatible(init, data);
  if (options.validation) {
    if (options.validation->empty()) throw DataError("validation set is empty");
    check_compatible(init, *options.validation);
  }

  TrainResult result{std::move(init), {}, 0};
  TreeModel& model = result.model;
  // Later steps only project the rows they touch, so start from a feasible W.
  for (std::size_t r = 0; r < model.weights().rows(); ++r)
    project_row(model.weights().row(r), config.nu);
  OptimizerState state(model);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<std::size_t> assignment;
  std::size_t phase = 0;
  std::size_t phase_steps = 0;
  double phase_bound = 0.0;
  auto start_phase = [&] {
    assignment = assign_leaves(model, data);
    ++phase;
    phase_steps = 0;
    phase_bound = surrogate_loss(model, data, config.inference, assignment);
  };
  if (stable) start_phase();

  const bool regression = data.task() == TaskKind::regression;
  std::optional<TreeModel> best_model;
  double best_score = -std::numeric_limits<double>::infinity();
  double wall_ms = 0.0;
  std::size_t steps = 0;

  auto record = [&](std::size_t epoch, std::optional<double> bound) {
    std::optional<double> val_score;
    if (options.validation) {
      val_score = regression ? -empirical_loss(model, *options.validation)
                             : accuracy(model, *options.validation);
      if (*val_score > best_score) {
        best_score = *val_score;
        best_model = model;
        result.selected_epoch = epoch;
      }
    }
    if (!options.record_metrics) return;
    EpochMetrics m;
    m.epoch = epoch;
    m.phase = phase;
    m.steps = steps;
    m.empirical_loss = empirical_loss(model, data);
    if (!std::isfinite(m.empirical_loss)) throw NumericError("training loss overflowed");
    m.reference_surrogate = surrogate_loss(model, data, config.inference);
    m.surrogate_loss =
        stable ? (bound ? *bound : surrogate_loss(model, data, config.inference, assignment))
               : m.reference_surrogate;
    m.train_accuracy = accuracy(model, data);
    if (options.validation)
      m.val_accuracy = regression ? accuracy(model, *options.validation) : *val_score;
    m.active_leaves = active_leaves(model, data);
    m.wall_ms = wall_ms;
    result.trace.push_back(m);
  };

  record(0, stable ? std::optional<double>(phase_bound) : std::nullopt);
  std::size_t epoch = 0;
  while (steps < config.tau) {
    const auto t0 = Clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    ++epoch;
    for (std::size_t pos = 0; pos < order.size() && steps < config.tau;
         pos += config.batch_size) {
      if (stable && phase_steps >= config.ssgd_inner_steps) start_phase();
      const std::size_t len = std::min(config.batch_size, order.size() - pos);
      sgd_step(model, data, std::span(order).subspan(pos, len), config, state,
               stable ? std::span<const std::size_t>(assignment) : std::span<const std::size_t>{});
      ++steps;
      ++phase_steps;
    }
    wall_ms += std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

    std::optional<double> bound;
    if (stable) {
      bound = surrogate_loss(model, data, config.inference, assignment);
      const double rel = (phase_bound - *bound) / std::max(std::abs(phase_bound), 1e-12);
      phase_bound = *bound;
      if (rel < config.ssgd_rel_improvement) phase_steps = config.ssgd_inner_steps;
    }
    record(epoch, bound);
  }

  if (options.validation) {
    if (best_model) result.model = std::move(*best_model);
  } else {
    result.selected_epoch = epoch;
  }
  return result;
}

}  // namespace

TrainResult train_sgd(const Dataset& data, const OptimizerConfig& config, TreeModel init,
                      const TrainOptions& options) {
  return run_training(data, config, std::move(init), options, false);
}

TrainResult train_ssgd(const Dataset& data, const OptimizerConfig& config, TreeModel init,
                       const TrainOptions& options) {
  return run_training(data, config, std::move(init), options, true);
}

TrainResult train(const Dataset& data, const OptimizerConfig& config, TreeModel init,
                  const TrainOptions& options) {
  return config.algorithm == Algorithm::sgd ? train_sgd(data, config, std::move(init), options)
                                            : train_ssgd(data, config, std::move(init), options);
}

}  // namespace obtree
