#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "obtree/dataset.hpp"
#include "obtree/losses.hpp"
#include "obtree/tree.hpp"

namespace obtree {

// Values closer than this are treated as ties; ties go to the smallest leaf.
inline constexpr double kTieTolerance = 1e-12;

enum class Inference { exact, fast };

struct LossAugResult {
  DecisionVector g_hat;
  std::size_t leaf = 0;
  double value = 0.0;  // g_hat^T W x + loss(theta_leaf, y)
};

// A bit where a maximizer differs from sign(Wx); `bit` is the maximizer's value.
struct Flip {
  std::size_t node;
  int bit;
  bool operator==(const Flip&) const = default;
};

// Loss-augmented maximizer described relative to sign(Wx). `excess` is the
// maximized score+loss minus max_h h^T W x, i.e. the unconstrained surrogate.
struct SparseLossAug {
  std::size_t leaf = 0;
  double excess = 0.0;
  std::vector<Flip> flips;
};

// Constrained maximizer of h^T W x over {h : f(h) = a}, relative to sign(Wx).
// `penalty` = sum|w_i^T x| - max_{f(h)=a} h^T W x.
struct SparseConstrained {
  double penalty = 0.0;
  std::vector<Flip> flips;
};

// Exhaustive search over all 2^m decision vectors. Ties go to the smallest
// leaf, then the lexicographically smallest g (-1 < +1). Refuses m > 20.
LossAugResult brute_force_loss_aug(const TreeModel& model, const ExampleRef& ex);

// One inner product per internal node, one sweep accumulating the on-path
// disagreement penalty 2|w_i^T x|, then argmax over the m+1 leaves.
LossAugResult exact_loss_aug(const TreeModel& model, const ExampleRef& ex);
SparseLossAug exact_loss_aug_sparse(const TreeModel& model, const ExampleRef& ex);

// Maximizer restricted to the radius-1 Hamming ball around sign(Wx): the
// predicted leaf plus, for each of the d path nodes, the leaf reached by
// flipping that bit and descending the other subtree by sign decisions.
// The sparse form costs O(d^2 p~); the full form also materializes g_hat.
LossAugResult fast_loss_aug(const TreeModel& model, const ExampleRef& ex);
SparseLossAug fast_loss_aug_sparse(const TreeModel& model, const ExampleRef& ex);

SparseLossAug loss_aug_sparse(const TreeModel& model, const ExampleRef& ex, Inference mode);

// argmax of h^T W x subject to f(h) = leaf: path bits follow the path, the
// rest follow sign(w_i^T x).
std::pair<DecisionVector, double> constrained_score(const TreeModel& model,
                                                    std::span<const double> x,
                                                    std::size_t leaf);
SparseConstrained constrained_sparse(const TreeModel& model, std::span<const double> x,
                                     std::size_t leaf);

// sum_i |w_i^T x| = max_h h^T W x.
double unconstrained_score(const TreeModel& model, std::span<const double> x);

// Which per-example bound to evaluate. With an assignment the subtracted term
// is constrained to f(h) = assignment (the stable-SGD bound).
struct SurrogateMode {
  Inference inference = Inference::exact;
  std::optional<std::size_t> assignment;

  static SurrogateMode exact() { return {Inference::exact, std::nullopt}; }
  static SurrogateMode fast() { return {Inference::fast, std::nullopt}; }
  static SurrogateMode ssgd(std::size_t leaf, Inference inf = Inference::fast) {
    return {inf, leaf};
  }
};

double surrogate_per_example(const TreeModel& model, const ExampleRef& ex,
                             const SurrogateMode& mode);

// loss(theta_{f(sign(Wx))}, y)
double example_loss(const TreeModel& model, const ExampleRef& ex);

// Sums over the dataset. `assignment`, when non-empty, gives one leaf per
// example and selects the stable-SGD bound.
double empirical_loss(const TreeModel& model, const Dataset& data);
double surrogate_loss(const TreeModel& model, const Dataset& data, Inference inference,
                      std::span<const std::size_t> assignment = {});

// Fraction of examples whose argmax class matches; NaN for regression data.
double accuracy(const TreeModel& model, const Dataset& data);

// Distinct leaves reached by the dataset.
std::size_t active_leaves(const TreeModel& model, const Dataset& data);

std::vector<std::size_t> assign_leaves(const TreeModel& model, const Dataset& data);

// Throws StructuralError when the model cannot consume the dataset.
void check_compatible(const TreeModel& model, const Dataset& data);

}  // namespace obtree
