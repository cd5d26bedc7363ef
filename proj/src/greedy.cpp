#include "obtree/greedy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <utility>

#include "obtree/error.hpp"
#include "obtree/inference.hpp"

namespace obtree {

double entropy_bits(std::span<const std::size_t> counts) {
  const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  if (n == 0.0) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

double info_gain_counts(std::span<const std::size_t> left, std::span<const std::size_t> right) {
  if (left.size() != right.size()) throw StructuralError("histograms differ in length");
  const std::size_t nl = std::accumulate(left.begin(), left.end(), std::size_t{0});
  const std::size_t nr = std::accumulate(right.begin(), right.end(), std::size_t{0});
  if (nl + nr == 0) throw StructuralError("information gain of an empty split");
  std::vector<std::size_t> parent(left.size());
  for (std::size_t c = 0; c < left.size(); ++c) parent[c] = left[c] + right[c];
  const double n = static_cast<double>(nl + nr);
  const double gain = entropy_bits(parent) - (static_cast<double>(nl) / n) * entropy_bits(left) -
                      (static_cast<double>(nr) / n) * entropy_bits(right);
  return std::max(0.0, gain);
}

double info_gain(std::span<const int> labels_left, std::span<const int> labels_right) {
  std::vector<int> all(labels_left.begin(), labels_left.end());
  all.insert(all.end(), labels_right.begin(), labels_right.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<std::size_t> left(all.size()), right(all.size());
  auto slot = [&](int y) { return std::lower_bound(all.begin(), all.end(), y) - all.begin(); };
  for (int y : labels_left) ++left[slot(y)];
  for (int y : labels_right) ++right[slot(y)];
  return info_gain_counts(left, right);
}

std::vector<double> axis_split_row(const AxisSplit& split, std::size_t dim, double nu) {
  if (dim < 2 || split.feature + 1 >= dim)
    throw StructuralError("axis split feature must precede the bias slot");
  if (!std::isfinite(split.threshold)) throw StructuralError("axis threshold must be finite");
  std::vector<double> w(dim, 0.0);
  w[split.feature] = 1.0;
  w[dim - 1] = split.threshold;
  const double sq = squared_norm(w);
  if (sq > nu) {
    const double scale = std::sqrt(nu / sq);
    for (double& v : w) v *= scale;
  }
  return w;
}

std::vector<double> laplace_log_frequencies(std::span<const std::size_t> counts) {
  const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  const double k = static_cast<double>(counts.size());
  std::vector<double> theta(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c)
    theta[c] = std::log((static_cast<double>(counts[c]) + 1.0) / (n + k));
  return theta;
}

void refresh_leaf_parameters(TreeModel& model, const Dataset& data) {
  check_compatible(model, data);
  if (data.task() != TaskKind::classification)
    throw DataError("leaf frequencies need classification data");
  const std::size_t k = model.classes();
  std::vector<std::vector<std::size_t>> counts(model.leaf_count() + 1,
                                               std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < data.size(); ++i)
    ++counts[predict_leaf(model, data.x(i))][data.label(i) - 1];
  for (std::size_t j = 1; j <= model.leaf_count(); ++j) {
    auto row = model.leaf_row(j);
    if (std::all_of(counts[j].begin(), counts[j].end(), [](std::size_t c) { return c == 0; })) {
      std::fill(row.begin(), row.end(), 0.0);
      continue;
    }
    const auto theta = laplace_log_frequencies(counts[j]);
    std::copy(theta.begin(), theta.end(), row.begin());
  }
}

namespace {

void require_classification(const Dataset& data) {
  if (data.empty()) throw DataError("cannot build a tree from an empty dataset");
  if (data.task() != TaskKind::classification)
    throw DataError("greedy tree builders need classification data");
  if (!data.augmented()) throw StructuralError("greedy tree builders need augmented data");
}

std::vector<std::size_t> histogram(const Dataset& data, std::span<const std::size_t> idx,
                                   std::size_t k) {
  std::vector<std::size_t> counts(k, 0);
  for (auto i : idx) ++counts[data.label(i) - 1];
  return counts;
}

bool is_pure(std::span<const std::size_t> counts) {
  return std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
}

// Shared recursion for both greedy builders. `choose` fills the node's row
// and returns false when no split exists.
template <typename Chooser>
class GreedyBuilder {
 public:
  GreedyBuilder(const Dataset& data, std::size_t depth, const GreedyOptions& options,
                Chooser choose)
      : data_(data),
        options_(options),
        choose_(std::move(choose)),
        model_(depth, data.dim(), data.num_outputs(), LossKind::log) {}

  TreeModel build() {
    std::vector<std::size_t> all(data_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    grow(1, all, histogram(data_, all, model_.classes()));
    return std::move(model_);
  }

 private:
  void grow(std::size_t node, const std::vector<std::size_t>& idx,
            const std::vector<std::size_t>& parent_counts) {
    const auto& topo = model_.topology();
    const auto counts = idx.empty() ? parent_counts : histogram(data_, idx, model_.classes());
    if (topo.is_leaf_heap_index(node)) {
      set_leaf(topo.leaf_of_heap(node), counts);
      return;
    }
    auto row = model_.split_row(node);
    if (idx.size() < options_.min_split || is_pure(counts) || !choose_(idx, row)) {
      pad(node, counts);
      return;
    }
    std::vector<std::size_t> left, right;
    for (auto i : idx) (sign_of(dot(row, data_.x(i))) > 0 ? right : left).push_back(i);
    grow(TreeTopology::left(node), left, counts);
    grow(TreeTopology::right(node), right, counts);
  }

  // Zero rows below `node`; every leaf underneath copies `counts`.
  void pad(std::size_t node, const std::vector<std::size_t>& counts) {
    const auto& topo = model_.topology();
    if (topo.is_leaf_heap_index(node)) {
      set_leaf(topo.leaf_of_heap(node), counts);
      return;
    }
    auto row = model_.split_row(node);
    std::fill(row.begin(), row.end(), 0.0);
    pad(TreeTopology::left(node), counts);
    pad(TreeTopology::right(node), counts);
  }

  void set_leaf(std::size_t leaf, const std::vector<std::size_t>& counts) {
    const auto theta = laplace_log_frequencies(counts);
    std::copy(theta.begin(), theta.end(), model_.leaf_row(leaf).begin());
  }

  const Dataset& data_;
  GreedyOptions options_;
  Chooser choose_;
  TreeModel model_;
};

template <typename Chooser>
TreeModel build_greedy(const Dataset& data, std::size_t depth, const GreedyOptions& options,
                       Chooser choose) {
  return GreedyBuilder<Chooser>(data, depth, options, std::move(choose)).build();
}

}  // namespace

TreeModel build_axis_aligned(const Dataset& data, std::size_t depth,
                             const GreedyOptions& options) {
  require_classification(data);
  const std::size_t k = data.num_outputs();
  const std::size_t features = data.num_features();
  auto choose = [&](const std::vector<std::size_t>& idx, std::span<double> row) {
    const auto total = histogram(data, idx, k);
    bool found = false;
    double best_gain = -1.0;
    AxisSplit best;
    std::vector<std::size_t> sorted = idx;
    std::vector<std::size_t> left(k), right(k);
    for (std::size_t f = 0; f < features; ++f) {
      std::stable_sort(sorted.begin(), sorted.end(),
                       [&](auto a, auto b) { return data.x(a)[f] < data.x(b)[f]; });
      std::fill(left.begin(), left.end(), 0);
      right = total;
      for (std::size_t pos = 0; pos + 1 < sorted.size(); ++pos) {
        const int y = data.label(sorted[pos]) - 1;
        ++left[y];
        --right[y];
        const double a = data.x(sorted[pos])[f];
        const double b = data.x(sorted[pos + 1])[f];
        if (!(a < b)) continue;
        const double gain = info_gain_counts(left, right);
        if (gain > best_gain) {
          best_gain = gain;
          best = {f, a + (b - a) / 2.0};
          found = true;
        }
      }
    }
    if (!found) return false;
    const auto w = axis_split_row(best, data.dim(), options.nu);
    std::copy(w.begin(), w.end(), row.begin());
    return true;
  };
  return build_greedy(data, depth, options, choose);
}

TreeModel build_random_oblique(const Dataset& data, std::size_t depth, std::size_t trials,
                               std::uint64_t seed, const GreedyOptions& options) {
  require_classification(data);
  if (trials < 1) throw UsageError("random oblique trees need at least one trial per node");
  const std::size_t k = data.num_outputs();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::vector<double> candidate(data.dim());
  auto choose = [&](const std::vector<std::size_t>& idx, std::span<double> row) {
    double best_gain = -1.0;
    std::vector<std::size_t> left(k), right(k);
    for (std::size_t t = 0; t < trials; ++t) {
      for (double& v : candidate) v = gauss(rng);
      const double sq = squared_norm(candidate);
      if (sq > 0.0) {
        const double scale = std::sqrt(options.nu / sq);
        for (double& v : candidate) v *= scale;
      }
      std::fill(left.begin(), left.end(), 0);
      std::fill(right.begin(), right.end(), 0);
      for (auto i : idx) {
        auto& side = sign_of(dot(candidate, data.x(i))) > 0 ? right : left;
        ++side[data.label(i) - 1];
      }
      const double gain = info_gain_counts(left, right);
      if (gain > best_gain) {
        best_gain = gain;
        std::copy(candidate.begin(), candidate.end(), row.begin());
      }
    }
    return true;
  };
  return build_greedy(data, depth, options, choose);
}

TreeModel co2_refine(TreeModel model, const Dataset& data, const OptimizerConfig& config,
                     std::size_t epochs_per_node) {
  check_compatible(model, data);
  if (data.task() != TaskKind::classification)
    throw DataError("greedy refinement needs classification data");
  OptimizerConfig local = config;
  local.algorithm = Algorithm::sgd;
  local.validate();

  const std::size_t m = model.internal_count();
  const std::size_t k = model.classes();
  std::vector<std::vector<std::size_t>> members(2 * m + 2);
  members[1].resize(data.size());
  std::iota(members[1].begin(), members[1].end(), std::size_t{0});

  // Stumps fitted at leaf parents; their pseudo-leaves are real leaves.
  std::vector<std::pair<std::size_t, TreeModel>> trained_leaves;

  // Heap order is breadth-first order.
  for (std::size_t node = 1; node <= m; ++node) {
    const auto& idx = members[node];
    auto row = model.split_row(node);
    if (!idx.empty()) {
      const Dataset sub = data.subset(idx);
      std::vector<std::size_t> left(k, 0), right(k, 0);
      for (std::size_t i = 0; i < sub.size(); ++i)
        ++(sign_of(dot(row, sub.x(i))) > 0 ? right : left)[sub.label(i) - 1];

      TreeModel stump(1, model.features(), k, LossKind::log);
      std::copy(row.begin(), row.end(), stump.split_row(1).begin());
      project_row(stump.split_row(1), local.nu);
      const auto theta_l = laplace_log_frequencies(left);
      const auto theta_r = laplace_log_frequencies(right);
      std::copy(theta_l.begin(), theta_l.end(), stump.leaf_row(1).begin());
      std::copy(theta_r.begin(), theta_r.end(), stump.leaf_row(2).begin());

      if (epochs_per_node > 0)
        local.tau = epochs_per_node * steps_per_epoch(sub.size(), local.batch_size);
      local.seed = config.seed + node;
      auto fitted = train_sgd(sub, local, std::move(stump), {nullptr, false});
      const auto w = fitted.model.split_row(1);
      std::copy(w.begin(), w.end(), row.begin());
      if (2 * node > m) trained_leaves.emplace_back(node, std::move(fitted.model));
    }
    for (auto i : idx)
      members[TreeTopology::child(node, sign_of(dot(row, data.x(i))))].push_back(i);
  }
  refresh_leaf_parameters(model, data);
  for (const auto& [node, stump] : trained_leaves) {
    for (std::size_t side = 0; side < 2; ++side) {
      const auto src = stump.leaf_row(side + 1);
      std::copy(src.begin(), src.end(), model.leaf_row(2 * node + side - m).begin());
    }
  }
  return model;
}

}  // namespace obtree
