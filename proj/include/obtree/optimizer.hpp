#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "obtree/dataset.hpp"
#include "obtree/inference.hpp"
#include "obtree/matrix.hpp"
#include "obtree/tree.hpp"

namespace obtree {

enum class Algorithm { sgd, ssgd };

std::string_view to_string(Algorithm a);
std::string_view to_string(Inference i);
Algorithm parse_algorithm(std::string_view text);
Inference parse_inference(std::string_view text);

struct OptimizerConfig {
  double nu = 1.0;           // per-row bound ||w_i||^2 <= nu
  double eta = 0.1;          // learning rate
  std::size_t tau = 1000;    // total step budget
  std::size_t batch_size = 32;
  double momentum = 0.0;     // heavy-ball coefficient in [0, 1)
  Algorithm algorithm = Algorithm::sgd;
  Inference inference = Inference::fast;
  std::size_t ssgd_inner_steps = 200;
  double ssgd_rel_improvement = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

// Euclidean projection onto {w : ||w||^2 <= nu}.
void project_row(std::span<double> w, double nu);
std::vector<double> projected_row(std::span<const double> w, double nu);

// Dense buffer whose nonzero rows are tracked, so clearing and applying cost
// O(touched rows) instead of O(all rows).
class SparseRows {
 public:
  SparseRows() = default;
  SparseRows(std::size_t rows, std::size_t cols) : values_(rows, cols), touched_(rows, 0) {}

  std::span<double> touch(std::size_t r);
  std::span<const double> row(std::size_t r) const { return values_.row(r); }
  const std::vector<std::size_t>& touched_rows() const { return rows_; }
  bool is_touched(std::size_t r) const { return touched_[r] != 0; }
  void clear();
  const Matrix& dense() const { return values_; }

 private:
  Matrix values_;
  std::vector<char> touched_;
  std::vector<std::size_t> rows_;
};

// Batch-averaged subgradient of the surrogate. Row r of `weights` is node
// r+1, row r of `leaves` is leaf r+1.
struct BatchGradient {
  BatchGradient() = default;
  explicit BatchGradient(const TreeModel& model)
      : weights(model.internal_count(), model.features()),
        leaves(model.leaf_count(), model.classes()) {}
  SparseRows weights;
  SparseRows leaves;
  // W rows with a nonzero contribution from each example, for the sparsity check.
  std::size_t max_rows_per_example = 0;
};

// Adds (g - h) x^T to the W rows and grad_theta loss(theta_leaf, y) to the
// selected leaf row, scaled by `scale`. `assignment` switches the subtracted
// term to the constrained maximizer with f(h) = assignment.
void accumulate_example(const TreeModel& model, const ExampleRef& ex, Inference inference,
                        std::optional<std::size_t> assignment, double scale,
                        BatchGradient& grad);

// Averaged subgradient over `batch` (indices into data). `assignment`, when
// non-empty, is indexed by example.
void batch_subgradient(const TreeModel& model, const Dataset& data,
                       std::span<const std::size_t> batch, Inference inference,
                       std::span<const std::size_t> assignment, BatchGradient& grad);

// Velocity plus reusable gradient workspace for one model shape.
class OptimizerState {
 public:
  explicit OptimizerState(const TreeModel& model);

  BatchGradient gradient;
  SparseRows weight_velocity;
  SparseRows leaf_velocity;
};

// One projected heavy-ball step: v = momentum*v - eta*grad, params += v, then
// every W row touched this step is projected onto the norm ball. Throws
// NumericError (leaving the model untouched) if the gradient is not finite.
void sgd_step(TreeModel& model, const Dataset& data, std::span<const std::size_t> batch,
              const OptimizerConfig& config, OptimizerState& state,
              std::span<const std::size_t> assignment = {});

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t phase = 0;  // stable-SGD assignment phase, 0 for plain SGD
  std::size_t steps = 0;  // cumulative
  double empirical_loss = 0.0;
  double surrogate_loss = 0.0;  // the bound being minimized
  // Unconstrained bound with the same inference; equals surrogate_loss for SGD.
  double reference_surrogate = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;
  std::size_t active_leaves = 0;
  double wall_ms = 0.0;  // cumulative optimization time, metrics excluded
};

struct TrainOptions {
  const Dataset* validation = nullptr;
  bool record_metrics = true;
};

struct TrainResult {
  TreeModel model;
  std::vector<EpochMetrics> trace;
  std::size_t selected_epoch = 0;  // epoch whose parameters were returned
};

std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size);

// Minibatch SGD on the surrogate. Epoch 0 in the trace is the initial model.
// With a validation set the best-validation-accuracy iterate is returned.
TrainResult train_sgd(const Dataset& data, const OptimizerConfig& config, TreeModel init,
                      const TrainOptions& options = {});

// Stable SGD: leaf assignments are frozen for up to ssgd_inner_steps steps, or
// until an epoch improves the frozen bound by less than ssgd_rel_improvement.
TrainResult train_ssgd(const Dataset& data, const OptimizerConfig& config, TreeModel init,
                       const TrainOptions& options = {});

// Dispatches on config.algorithm.
TrainResult train(const Dataset& data, const OptimizerConfig& config, TreeModel init,
                  const TrainOptions& options = {});

}  // namespace obtree
