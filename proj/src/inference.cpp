#include "obtree/inference.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "obtree/error.hpp"

namespace obtree {
namespace {

double leaf_loss(const TreeModel& model, std::size_t leaf, const ExampleRef& ex) {
  return loss_value(model.task(), model.leaf_row(leaf), ex);
}

void check_input(const TreeModel& model, std::span<const double> x) {
  if (x.size() != model.features())
    throw StructuralError("input has " + std::to_string(x.size()) +
                          " features, model expects " + std::to_string(model.features()));
}

// scores[i] = w_i^T x for i = 1..m; index 0 unused.
std::vector<double> all_scores(const TreeModel& model, std::span<const double> x) {
  std::vector<double> s(model.internal_count() + 1, 0.0);
  for (std::size_t i = 1; i <= model.internal_count(); ++i) s[i] = model.score(i, x);
  return s;
}

// Replaces (best, best_leaf) when `value` wins under the shared tie rule.
bool improves(double value, std::size_t leaf, double best, std::size_t best_leaf) {
  if (value > best + kTieTolerance) return true;
  return std::abs(value - best) <= kTieTolerance && leaf < best_leaf;
}

LossAugResult materialize(const TreeModel& model, const ExampleRef& ex,
                          const std::vector<double>& scores, const SparseLossAug& sparse) {
  std::vector<std::int8_t> bits(model.internal_count());
  for (std::size_t i = 1; i <= model.internal_count(); ++i)
    bits[i - 1] = static_cast<std::int8_t>(sign_of(scores[i]));
  for (const auto& f : sparse.flips) bits[f.node - 1] = static_cast<std::int8_t>(f.bit);
  LossAugResult r;
  r.g_hat = DecisionVector(std::move(bits));
  r.leaf = sparse.leaf;
  double v = 0.0;
  for (std::size_t i = 1; i <= model.internal_count(); ++i) v += r.g_hat.at_node(i) * scores[i];
  r.value = v + leaf_loss(model, sparse.leaf, ex);
  return r;
}

SparseLossAug exact_from_scores(const TreeModel& model, const ExampleRef& ex,
                                const std::vector<double>& s) {
  const std::size_t m = model.internal_count();
  // penalty[heap] accumulates 2|w_i^T x| over disagreeing bits on the way down.
  std::vector<double> penalty(2 * m + 2, 0.0);
  for (std::size_t i = 1; i <= m; ++i) {
    const double cost = 2.0 * std::abs(s[i]);
    const bool goes_right = sign_of(s[i]) > 0;
    penalty[TreeTopology::left(i)] = penalty[i] + (goes_right ? cost : 0.0);
    penalty[TreeTopology::right(i)] = penalty[i] + (goes_right ? 0.0 : cost);
  }
  SparseLossAug r;
  r.excess = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 1; j <= m + 1; ++j) {
    const double v = leaf_loss(model, j, ex) - penalty[m + j];
    if (r.leaf == 0 || improves(v, j, r.excess, r.leaf)) {
      r.excess = v;
      r.leaf = j;
    }
  }
  for (const auto& step : path_nodes(r.leaf, model.topology()))
    if (sign_of(s[step.node]) != step.direction) r.flips.push_back({step.node, step.direction});
  return r;
}

}  // namespace

LossAugResult brute_force_loss_aug(const TreeModel& model, const ExampleRef& ex) {
  check_input(model, ex.x);
  const std::size_t m = model.internal_count();
  if (m > 20) throw StructuralError("brute-force inference refuses m > 20");
  const auto s = all_scores(model, ex.x);
  std::vector<double> losses(m + 2);
  for (std::size_t j = 1; j <= m + 1; ++j) losses[j] = leaf_loss(model, j, ex);

  LossAugResult best;
  std::vector<std::int8_t> bits(m);
  const std::uint64_t count = std::uint64_t{1} << m;
  for (std::uint64_t code = 0; code < count; ++code) {
    // Entry i takes bit (m-1-i) so codes enumerate g in lexicographic order.
    double score = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      bits[i] = ((code >> (m - 1 - i)) & 1U) ? 1 : -1;
      score += bits[i] * s[i + 1];
    }
    DecisionVector g(bits);
    const std::size_t leaf = navigate(g, model.topology());
    const double value = score + losses[leaf];
    if (best.leaf == 0 || improves(value, leaf, best.value, best.leaf)) {
      best.g_hat = std::move(g);
      best.leaf = leaf;
      best.value = value;
    }
  }
  return best;
}

SparseLossAug exact_loss_aug_sparse(const TreeModel& model, const ExampleRef& ex) {
  check_input(model, ex.x);
  return exact_from_scores(model, ex, all_scores(model, ex.x));
}

LossAugResult exact_loss_aug(const TreeModel& model, const ExampleRef& ex) {
  check_input(model, ex.x);
  const auto s = all_scores(model, ex.x);
  return materialize(model, ex, s, exact_from_scores(model, ex, s));
}

SparseLossAug fast_loss_aug_sparse(const TreeModel& model, const ExampleRef& ex) {
  check_input(model, ex.x);
  const auto& topo = model.topology();
  const std::size_t d = topo.depth();

  std::vector<std::pair<std::size_t, double>> path;
  path.reserve(d);
  std::size_t node = 1;
  while (!topo.is_leaf_heap_index(node)) {
    const double s = model.score(node, ex.x);
    path.emplace_back(node, s);
    node = TreeTopology::child(node, sign_of(s));
  }

  SparseLossAug r;
  r.leaf = topo.leaf_of_heap(node);
  r.excess = leaf_loss(model, r.leaf, ex);
  std::size_t flipped = 0;
  for (const auto& [at, s] : path) {
    const int dir = sign_of(s);
    std::size_t n = TreeTopology::child(at, -dir);
    while (!topo.is_leaf_heap_index(n)) n = TreeTopology::child(n, sign_of(model.score(n, ex.x)));
    const std::size_t leaf = topo.leaf_of_heap(n);
    const double v = leaf_loss(model, leaf, ex) - 2.0 * std::abs(s);
    if (improves(v, leaf, r.excess, r.leaf)) {
      r.excess = v;
      r.leaf = leaf;
      flipped = at;
    }
  }
  if (flipped != 0) {
    for (const auto& [at, s] : path)
      if (at == flipped) r.flips.push_back({at, -sign_of(s)});
  }
  return r;
}

LossAugResult fast_loss_aug(const TreeModel& model, const ExampleRef& ex) {
  check_input(model, ex.x);
  const auto sparse = fast_loss_aug_sparse(model, ex);
  return materialize(model, ex, all_scores(model, ex.x), sparse);
}

SparseLossAug loss_aug_sparse(const TreeModel& model, const ExampleRef& ex, Inference mode) {
  return mode == Inference::exact ? exact_loss_aug_sparse(model, ex)
                                  : fast_loss_aug_sparse(model, ex);
}

SparseConstrained constrained_sparse(const TreeModel& model, std::span<const double> x,
                                     std::size_t leaf) {
  check_input(model, x);
  SparseConstrained r;
  for (const auto& step : path_nodes(leaf, model.topology())) {
    const double s = model.score(step.node, x);
    if (sign_of(s) != step.direction) {
      r.flips.push_back({step.node, step.direction});
      r.penalty += 2.0 * std::abs(s);
    }
  }
  return r;
}

std::pair<DecisionVector, double> constrained_score(const TreeModel& model,
                                                    std::span<const double> x,
                                                    std::size_t leaf) {
  check_input(model, x);
  const auto path = path_nodes(leaf, model.topology());
  const auto s = all_scores(model, x);
  DecisionVector h = decisions(model.weights(), x);
  for (const auto& step : path) h.set_node(step.node, step.direction);
  double score = 0.0;
  for (std::size_t i = 1; i <= model.internal_count(); ++i) score += h.at_node(i) * s[i];
  return {std::move(h), score};
}

double unconstrained_score(const TreeModel& model, std::span<const double> x) {
  check_input(model, x);
  double total = 0.0;
  for (std::size_t i = 1; i <= model.internal_count(); ++i) total += std::abs(model.score(i, x));
  return total;
}

double surrogate_per_example(const TreeModel& model, const ExampleRef& ex,
                             const SurrogateMode& mode) {
  double value = loss_aug_sparse(model, ex, mode.inference).excess;
  if (mode.assignment) value += constrained_sparse(model, ex.x, *mode.assignment).penalty;
  return value;
}

double example_loss(const TreeModel& model, const ExampleRef& ex) {
  return leaf_loss(model, predict_leaf(model, ex.x), ex);
}

void check_compatible(const TreeModel& model, const Dataset& data) {
  if (data.dim() != model.features())
    throw StructuralError("data has " + std::to_string(data.dim()) +
                          " (augmented) features, model expects " +
                          std::to_string(model.features()));
  if (data.loss_kind() != model.task())
    throw StructuralError("model task does not match the dataset task");
  if (data.num_outputs() > model.classes() ||
      (data.task() == TaskKind::regression && data.num_outputs() != model.classes()))
    throw StructuralError("data has " + std::to_string(data.num_outputs()) +
                          " outputs, model has " + std::to_string(model.classes()));
}

double empirical_loss(const TreeModel& model, const Dataset& data) {
  if (data.empty()) throw DataError("empirical loss of an empty dataset");
  check_compatible(model, data);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) total += example_loss(model, data.example(i));
  return total;
}

double surrogate_loss(const TreeModel& model, const Dataset& data, Inference inference,
                      std::span<const std::size_t> assignment) {
  if (data.empty()) throw DataError("surrogate loss of an empty dataset");
  check_compatible(model, data);
  if (!assignment.empty() && assignment.size() != data.size())
    throw StructuralError("assignment must have one leaf per example");
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    SurrogateMode mode{inference, std::nullopt};
    if (!assignment.empty()) mode.assignment = assignment[i];
    total += surrogate_per_example(model, data.example(i), mode);
  }
  return total;
}

double accuracy(const TreeModel& model, const Dataset& data) {
  if (data.task() != TaskKind::classification) return std::numeric_limits<double>::quiet_NaN();
  if (data.empty()) throw DataError("accuracy of an empty dataset");
  check_compatible(model, data);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (predict_class(model, data.x(i)) == data.label(i)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<std::size_t> assign_leaves(const TreeModel& model, const Dataset& data) {
  check_compatible(model, data);
  std::vector<std::size_t> a(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) a[i] = predict_leaf(model, data.x(i));
  return a;
}

std::size_t active_leaves(const TreeModel& model, const Dataset& data) {
  if (data.empty()) throw DataError("active leaves of an empty dataset");
  std::vector<char> seen(model.leaf_count() + 1, 0);
  std::size_t count = 0;
  for (auto leaf : assign_leaves(model, data))
    if (!seen[leaf]) seen[leaf] = 1, ++count;
  return count;
}

}  // namespace obtree
