#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "obtree/losses.hpp"
#include "obtree/matrix.hpp"

namespace obtree {

// sign with sign(0) = +1. Every routing decision in the library goes through this.
inline int sign_of(double s) { return s >= 0.0 ? 1 : -1; }

// Complete binary tree in heap layout. Internal nodes are 1..m, the children
// of node i are 2i (left) and 2i+1 (right), and leaf j (1-based, left to
// right) sits at heap index m + j.
class TreeTopology {
 public:
  explicit TreeTopology(std::size_t depth);

  std::size_t depth() const { return depth_; }
  std::size_t internal_count() const { return internal_; }
  std::size_t leaf_count() const { return internal_ + 1; }

  static std::size_t left(std::size_t node) { return 2 * node; }
  static std::size_t right(std::size_t node) { return 2 * node + 1; }
  static std::size_t child(std::size_t node, int direction) {
    return direction > 0 ? right(node) : left(node);
  }
  bool is_leaf_heap_index(std::size_t heap) const { return heap > internal_; }
  std::size_t leaf_of_heap(std::size_t heap) const { return heap - internal_; }
  std::size_t heap_of_leaf(std::size_t leaf) const { return leaf + internal_; }

  bool operator==(const TreeTopology&) const = default;

 private:
  std::size_t depth_;
  std::size_t internal_;
};

// The m latent split decisions, each exactly -1 or +1.
class DecisionVector {
 public:
  DecisionVector() = default;
  explicit DecisionVector(std::size_t m, int fill = 1);
  explicit DecisionVector(std::vector<std::int8_t> bits);
  DecisionVector(std::initializer_list<int> bits);

  std::size_t size() const { return bits_.size(); }
  // 1-based node index, matching internal node numbering.
  int at_node(std::size_t node) const { return bits_[node - 1]; }
  void set_node(std::size_t node, int bit);
  int operator[](std::size_t i) const { return bits_[i]; }
  std::span<const std::int8_t> bits() const { return bits_; }

  bool operator==(const DecisionVector&) const = default;

 private:
  std::vector<std::int8_t> bits_;
};

struct PathStep {
  std::size_t node;
  int direction;
  bool operator==(const PathStep&) const = default;
};

class TreeModel {
 public:
  TreeModel(std::size_t depth, std::size_t features, std::size_t classes,
            LossKind task = LossKind::log);
  TreeModel(TreeTopology topology, Matrix weights, Matrix leaves, LossKind task);

  const TreeTopology& topology() const { return topology_; }
  std::size_t depth() const { return topology_.depth(); }
  std::size_t internal_count() const { return topology_.internal_count(); }
  std::size_t leaf_count() const { return topology_.leaf_count(); }
  // Augmented input dimension, including the trailing -1 bias slot.
  std::size_t features() const { return weights_.cols(); }
  std::size_t classes() const { return leaves_.cols(); }
  LossKind task() const { return task_; }

  // W is m x features; row of node i is split_row(i).
  const Matrix& weights() const { return weights_; }
  Matrix& weights() { return weights_; }
  // Theta is (m+1) x classes; row of leaf j is leaf_row(j).
  const Matrix& leaves() const { return leaves_; }
  Matrix& leaves() { return leaves_; }

  std::span<const double> split_row(std::size_t node) const { return weights_.row(node - 1); }
  std::span<double> split_row(std::size_t node) { return weights_.row(node - 1); }
  std::span<const double> leaf_row(std::size_t leaf) const { return leaves_.row(leaf - 1); }
  std::span<double> leaf_row(std::size_t leaf) { return leaves_.row(leaf - 1); }

  double score(std::size_t node, std::span<const double> x) const {
    return dot(split_row(node), x);
  }

  bool all_finite() const;
  // max_i ||w_i||^2 <= nu + tol
  bool rows_within(double nu, double tol = 1e-9) const;

  bool operator==(const TreeModel&) const = default;

 private:
  TreeTopology topology_;
  Matrix weights_;
  Matrix leaves_;
  LossKind task_;
};

// Leaf reached by descending from the root left on -1 and right on +1.
std::size_t navigate(const DecisionVector& h, const TreeTopology& topology);

// sign(Wx) for every internal node.
DecisionVector decisions(const Matrix& weights, std::span<const double> x);

// navigate(decisions(W, x)) evaluating only the d inner products on the path.
std::size_t predict_leaf(const Matrix& weights, std::span<const double> x,
                         const TreeTopology& topology);
std::size_t predict_leaf(const TreeModel& model, std::span<const double> x);

// Softmax of the selected leaf's parameters.
std::vector<double> predict_distribution(const TreeModel& model, std::span<const double> x);

// Argmax class (1-based) of the selected leaf, first class on ties.
int predict_class(const TreeModel& model, std::span<const double> x);

// Root-first (node, direction) pairs leading to leaf j.
std::vector<PathStep> path_nodes(std::size_t leaf, const TreeTopology& topology);

// Line-oriented text format with 17 significant digits per value.
void write_model(std::ostream& out, const TreeModel& model);
TreeModel read_model(std::istream& in);
void save_model(const std::string& path, const TreeModel& model);
TreeModel load_model(const std::string& path);

}  // namespace obtree
