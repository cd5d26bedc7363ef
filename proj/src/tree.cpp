#include "obtree/tree.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "obtree/error.hpp"

namespace obtree {

TreeTopology::TreeTopology(std::size_t depth) : depth_(depth) {
  if (depth < 1 || depth > 30)
    throw StructuralError("tree depth must be in 1..30, got " + std::to_string(depth));
  internal_ = (std::size_t{1} << depth) - 1;
}

DecisionVector::DecisionVector(std::size_t m, int fill)
    : bits_(m, static_cast<std::int8_t>(sign_of(fill))) {}

DecisionVector::DecisionVector(std::vector<std::int8_t> bits) : bits_(std::move(bits)) {
  for (auto b : bits_)
    if (b != 1 && b != -1) throw StructuralError("decision entries must be -1 or +1");
}

DecisionVector::DecisionVector(std::initializer_list<int> bits) {
  bits_.reserve(bits.size());
  for (int b : bits) {
    if (b != 1 && b != -1) throw StructuralError("decision entries must be -1 or +1");
    bits_.push_back(static_cast<std::int8_t>(b));
  }
}

void DecisionVector::set_node(std::size_t node, int bit) {
  if (bit != 1 && bit != -1) throw StructuralError("decision entries must be -1 or +1");
  bits_[node - 1] = static_cast<std::int8_t>(bit);
}

TreeModel::TreeModel(std::size_t depth, std::size_t features, std::size_t classes,
                     LossKind task)
    : topology_(depth),
      weights_(topology_.internal_count(), features),
      leaves_(topology_.leaf_count(), classes),
      task_(task) {
  if (features == 0 || classes == 0)
    throw StructuralError("model needs at least one feature and one class");
}

TreeModel::TreeModel(TreeTopology topology, Matrix weights, Matrix leaves, LossKind task)
    : topology_(topology), weights_(std::move(weights)), leaves_(std::move(leaves)), task_(task) {
  if (weights_.rows() != topology_.internal_count())
    throw StructuralError("weight matrix must have one row per internal node");
  if (leaves_.rows() != topology_.leaf_count())
    throw StructuralError("leaf matrix must have one row per leaf");
  if (weights_.cols() == 0 || leaves_.cols() == 0)
    throw StructuralError("model needs at least one feature and one class");
}

bool TreeModel::all_finite() const {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(weights_.data().begin(), weights_.data().end(), finite) &&
         std::all_of(leaves_.data().begin(), leaves_.data().end(), finite);
}

bool TreeModel::rows_within(double nu, double tol) const {
  for (std::size_t r = 0; r < weights_.rows(); ++r)
    if (squared_norm(weights_.row(r)) > nu + tol) return false;
  return true;
}

std::size_t navigate(const DecisionVector& h, const TreeTopology& topology) {
  if (h.size() != topology.internal_count())
    throw StructuralError("decision vector has " + std::to_string(h.size()) +
                          " entries, tree has " +
                          std::to_string(topology.internal_count()) + " internal nodes");
  std::size_t node = 1;
  while (!topology.is_leaf_heap_index(node)) node = TreeTopology::child(node, h.at_node(node));
  return topology.leaf_of_heap(node);
}

DecisionVector decisions(const Matrix& weights, std::span<const double> x) {
  if (x.size() != weights.cols())
    throw StructuralError("input has " + std::to_string(x.size()) + " features, model expects " +
                          std::to_string(weights.cols()));
  std::vector<std::int8_t> bits(weights.rows());
  for (std::size_t i = 0; i < weights.rows(); ++i)
    bits[i] = static_cast<std::int8_t>(sign_of(dot(weights.row(i), x)));
  return DecisionVector(std::move(bits));
}

std::size_t predict_leaf(const Matrix& weights, std::span<const double> x,
                         const TreeTopology& topology) {
  if (x.size() != weights.cols())
    throw StructuralError("input has " + std::to_string(x.size()) + " features, model expects " +
                          std::to_string(weights.cols()));
  std::size_t node = 1;
  while (!topology.is_leaf_heap_index(node))
    node = TreeTopology::child(node, sign_of(dot(weights.row(node - 1), x)));
  return topology.leaf_of_heap(node);
}

std::size_t predict_leaf(const TreeModel& model, std::span<const double> x) {
  return predict_leaf(model.weights(), x, model.topology());
}

std::vector<double> predict_distribution(const TreeModel& model, std::span<const double> x) {
  return softmax(model.leaf_row(predict_leaf(model, x)));
}

int predict_class(const TreeModel& model, std::span<const double> x) {
  auto theta = model.leaf_row(predict_leaf(model, x));
  return static_cast<int>(std::max_element(theta.begin(), theta.end()) - theta.begin()) + 1;
}

std::vector<PathStep> path_nodes(std::size_t leaf, const TreeTopology& topology) {
  if (leaf < 1 || leaf > topology.leaf_count())
    throw StructuralError("leaf " + std::to_string(leaf) + " out of range 1.." +
                          std::to_string(topology.leaf_count()));
  std::vector<PathStep> path(topology.depth());
  std::size_t heap = topology.heap_of_leaf(leaf);
  for (std::size_t k = topology.depth(); k-- > 0;) {
    path[k] = {heap / 2, (heap % 2 == 1) ? 1 : -1};
    heap /= 2;
  }
  return path;
}

namespace {

void write_row(std::ostream& out, std::span<const double> row) {
  char buf[32];
  for (std::size_t c = 0; c < row.size(); ++c) {
    std::snprintf(buf, sizeof buf, "%.17g", row[c]);
    if (c) out << ' ';
    out << buf;
  }
  out << '\n';
}

void read_row(std::istream& in, std::span<double> row, std::size_t line_no) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("truncated model file", line_no, 1);
  const char* p = line.c_str();
  for (std::size_t c = 0; c < row.size(); ++c) {
    char* end = nullptr;
    row[c] = std::strtod(p, &end);
    if (end == p || !std::isfinite(row[c]))
      throw ParseError("expected " + std::to_string(row.size()) + " finite values", line_no,
                       static_cast<std::size_t>(p - line.c_str()) + 1);
    p = end;
  }
  while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
  if (*p != '\0')
    throw ParseError("trailing data in model row", line_no,
                     static_cast<std::size_t>(p - line.c_str()) + 1);
}

}  // namespace

void write_model(std::ostream& out, const TreeModel& model) {
  out << "OBTREE 1\n";
  out << "depth " << model.depth() << " features " << model.features() << " classes "
      << model.classes() << " task " << to_string(model.task()) << '\n';
  for (std::size_t r = 0; r < model.weights().rows(); ++r) write_row(out, model.weights().row(r));
  for (std::size_t r = 0; r < model.leaves().rows(); ++r) write_row(out, model.leaves().row(r));
}

TreeModel read_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "OBTREE 1")
    throw ParseError("missing 'OBTREE 1' header", 1, 1);
  if (!std::getline(in, line)) throw ParseError("missing model shape line", 2, 1);
  std::istringstream shape(line);
  std::string kd, kf, kc, kt, task;
  std::size_t depth = 0, features = 0, classes = 0;
  if (!(shape >> kd >> depth >> kf >> features >> kc >> classes >> kt >> task) ||
      kd != "depth" || kf != "features" || kc != "classes" || kt != "task")
    throw ParseError("malformed model shape line", 2, 1);
  if (depth < 1 || depth > 30 || features == 0 || classes == 0)
    throw ParseError("model shape out of range", 2, 1);
  LossKind kind;
  try {
    kind = parse_loss_kind(task);
  } catch (const UsageError&) {
    throw ParseError("unknown task '" + task + "'", 2, 1);
  }
  TreeModel model(depth, features, classes, kind);
  std::size_t line_no = 3;
  for (std::size_t r = 0; r < model.weights().rows(); ++r)
    read_row(in, model.weights().row(r), line_no++);
  for (std::size_t r = 0; r < model.leaves().rows(); ++r)
    read_row(in, model.leaves().row(r), line_no++);
  return model;
}

void save_model(const std::string& path, const TreeModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_model(out, model);
  if (!out) throw DataError("failed writing '" + path + "'");
}

TreeModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model '" + path + "'");
  return read_model(in);
}

}  // namespace obtree
