#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "obtree/losses.hpp"
#include "obtree/matrix.hpp"

namespace obtree {

enum class TaskKind { classification, regression };

struct SparseEntry {
  std::uint32_t index;  // 1-based feature index
  double value;
  bool operator==(const SparseEntry&) const = default;
};
using SparseRow = std::vector<SparseEntry>;

// Labelled examples held both sparsely (for faithful writing) and as dense
// rows of width dim() for the inner products of training and inference.
class Dataset {
 public:
  Dataset() = default;

  // labels are 1-based class ids; class_values[c-1] is the raw label of class c.
  static Dataset classification(std::size_t num_features, std::vector<double> class_values,
                                std::vector<SparseRow> rows, std::vector<int> labels);
  // targets is n x q.
  static Dataset regression(std::size_t num_features, std::vector<SparseRow> rows,
                            Matrix targets);

  TaskKind task() const { return task_; }
  LossKind loss_kind() const {
    return task_ == TaskKind::classification ? LossKind::log : LossKind::squared;
  }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  // p: number of raw features, excluding the augmentation slot.
  std::size_t num_features() const { return num_features_; }
  // p~ = p + 1 once augmented.
  std::size_t dim() const { return num_features_ + (augmented_ ? 1 : 0); }
  bool augmented() const { return augmented_; }
  // k for classification, q for regression.
  std::size_t num_outputs() const;
  const std::vector<double>& class_values() const { return class_values_; }

  std::span<const double> x(std::size_t i) const { return dense_.row(i); }
  int label(std::size_t i) const { return labels_.empty() ? 0 : labels_[i]; }
  std::span<const double> target(std::size_t i) const;
  ExampleRef example(std::size_t i) const { return {x(i), label(i), target(i)}; }
  const SparseRow& sparse_row(std::size_t i) const { return rows_[i]; }
  const std::vector<int>& labels() const { return labels_; }

  Dataset subset(std::span<const std::size_t> indices) const;

  // Appends feature p+1 = -1 to every example. Errors on a second call.
  friend Dataset augment(const Dataset& data);
  friend Dataset concat(const Dataset& a, const Dataset& b);
  // Widens to `num_features` raw features (not allowed once augmented).
  Dataset with_num_features(std::size_t num_features) const;
  // Relabels onto a superset of the current raw class values.
  Dataset with_class_values(std::vector<double> class_values) const;

  bool operator==(const Dataset&) const = default;

 private:
  void densify();

  TaskKind task_ = TaskKind::classification;
  std::size_t num_features_ = 0;
  bool augmented_ = false;
  std::vector<double> class_values_;
  std::vector<SparseRow> rows_;
  std::vector<int> labels_;
  Matrix targets_;
  Matrix dense_;
};

Dataset augment(const Dataset& data);

// Examples of `b` appended to `a`. Both must share shape and class values.
Dataset concat(const Dataset& a, const Dataset& b);

// LibSVM text: "<label> <idx>:<val> ...", 1-based strictly increasing
// indices, '#' to end of line is a comment, blank lines are skipped.
// Classification labels are remapped to 1..k by sorted raw value.
Dataset parse_libsvm(std::istream& in, TaskKind task = TaskKind::classification);
Dataset parse_libsvm_string(const std::string& text, TaskKind task = TaskKind::classification);
Dataset load_libsvm(const std::string& path, TaskKind task = TaskKind::classification);

// Writes raw labels and the sparse rows with 17 significant digits.
// The augmentation slot, when present, is written like any other feature.
void write_libsvm(std::ostream& out, const Dataset& data);
std::string write_libsvm_string(const Dataset& data);

// Brings datasets onto a shared feature count and class-value set so that
// train/validation/test parts agree on model shape. Not for augmented data.
void align(std::span<Dataset> parts);

// Seeded shuffle then contiguous slices of floor(n*f) (remainder to the last).
std::vector<Dataset> split_dataset(const Dataset& data, std::span<const double> fractions,
                                   std::uint64_t seed);
std::vector<std::vector<std::size_t>> split_indices(std::size_t n,
                                                    std::span<const double> fractions,
                                                    std::uint64_t seed);

// 2-D XOR of two rotated half-planes with symmetric label noise. Classes 1/2,
// not augmented. `angle_deg` rotates both separating lines.
Dataset make_rotated_xor(std::size_t n, double noise, std::uint64_t seed,
                         double angle_deg = 30.0);

// Gaussian features labelled by the argmax of a random linear map.
Dataset make_random_linear(std::size_t n, std::size_t p, std::size_t k, std::uint64_t seed);

// FNV-1a 64-bit digest, rendered as 16 hex digits.
std::string content_hash(std::string_view bytes);
std::string file_hash(const std::string& path);

}  // namespace obtree
