#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "obtree/dataset.hpp"
#include "obtree/optimizer.hpp"
#include "obtree/tree.hpp"

namespace obtree {

// Base-2 entropy of a class histogram.
double entropy_bits(std::span<const std::size_t> counts);

// H(parent) - (nL/n) H(left) - (nR/n) H(right), in bits.
double info_gain_counts(std::span<const std::size_t> left, std::span<const std::size_t> right);
// Same, from raw label lists (any integer labels).
double info_gain(std::span<const int> labels_left, std::span<const int> labels_right);

// Threshold split on one feature column (0-based); x goes right iff x[feature] > threshold.
struct AxisSplit {
  std::size_t feature = 0;
  double threshold = 0.0;
};

// Oblique row with sign(w . x~) == sign(x[feature] - threshold), using the
// trailing -1 slot of x~ for the threshold. Scaled down to norm sqrt(nu) if longer.
std::vector<double> axis_split_row(const AxisSplit& split, std::size_t dim, double nu);

struct GreedyOptions {
  double nu = 1.0;            // row norm budget applied to converted/sampled rows
  std::size_t min_split = 2;  // nodes with fewer examples become leaves
};

// log((c_l + 1) / (n + k)) for each class.
std::vector<double> laplace_log_frequencies(std::span<const std::size_t> counts);

// Theta rows from the current routing; leaves with no data get zeros.
void refresh_leaf_parameters(TreeModel& model, const Dataset& data);

// Greedy information-gain tree over midpoint thresholds, padded to a
// complete tree (zero rows route right, padded leaves copy the stopped node).
// Requires augmented classification data.
TreeModel build_axis_aligned(const Dataset& data, std::size_t depth,
                             const GreedyOptions& options = {});

// Greedy tree whose node splits are the best of `trials` Gaussian hyperplanes
// rescaled to norm sqrt(nu).
TreeModel build_random_oblique(const Dataset& data, std::size_t depth, std::size_t trials,
                               std::uint64_t seed, const GreedyOptions& options = {});

// Breadth-first greedy refinement: each internal node's row is re-optimized
// as a depth-1 surrogate problem on the examples routed to it, with the two
// pseudo-leaves initialized from the class frequencies on either side. Leaves
// below a refined leaf parent take its fitted pseudo-leaves; the rest are
// refreshed from the final routing. Each node gets
// `epochs_per_node` passes over its data, or config.tau steps when zero.
TreeModel co2_refine(TreeModel model, const Dataset& data, const OptimizerConfig& config,
                     std::size_t epochs_per_node = 0);

}  // namespace obtree
