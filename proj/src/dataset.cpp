#include "obtree/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "obtree/error.hpp"

namespace obtree {

Dataset Dataset::classification(std::size_t num_features, std::vector<double> class_values,
                                std::vector<SparseRow> rows, std::vector<int> labels) {
  if (rows.size() != labels.size()) throw StructuralError("rows and labels differ in length");
  if (!std::is_sorted(class_values.begin(), class_values.end()) ||
      std::adjacent_find(class_values.begin(), class_values.end()) != class_values.end())
    throw StructuralError("class values must be strictly increasing");
  const int k = static_cast<int>(class_values.size());
  for (int y : labels)
    if (y < 1 || y > k) throw StructuralError("label " + std::to_string(y) + " out of range");
  Dataset d;
  d.task_ = TaskKind::classification;
  d.num_features_ = num_features;
  d.class_values_ = std::move(class_values);
  d.rows_ = std::move(rows);
  d.labels_ = std::move(labels);
  d.densify();
  return d;
}

Dataset Dataset::regression(std::size_t num_features, std::vector<SparseRow> rows,
                            Matrix targets) {
  if (rows.size() != targets.rows()) throw StructuralError("rows and targets differ in length");
  if (targets.cols() == 0) throw StructuralError("regression targets need at least one column");
  Dataset d;
  d.task_ = TaskKind::regression;
  d.num_features_ = num_features;
  d.rows_ = std::move(rows);
  d.targets_ = std::move(targets);
  d.densify();
  return d;
}

std::size_t Dataset::num_outputs() const {
  return task_ == TaskKind::classification ? class_values_.size() : targets_.cols();
}

std::span<const double> Dataset::target(std::size_t i) const {
  if (task_ == TaskKind::classification) return {};
  return targets_.row(i);
}

void Dataset::densify() {
  dense_ = Matrix(rows_.size(), dim());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    std::uint32_t prev = 0;
    for (const auto& e : rows_[i]) {
      if (e.index <= prev || e.index > dim())
        throw StructuralError("feature indices must be increasing and within 1.." +
                              std::to_string(dim()));
      if (!std::isfinite(e.value)) throw StructuralError("non-finite feature value");
      dense_(i, e.index - 1) = e.value;
      prev = e.index;
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset d;
  d.task_ = task_;
  d.num_features_ = num_features_;
  d.augmented_ = augmented_;
  d.class_values_ = class_values_;
  d.rows_.reserve(indices.size());
  if (task_ == TaskKind::regression) d.targets_ = Matrix(indices.size(), targets_.cols());
  d.dense_ = Matrix(indices.size(), dim());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    if (i >= size()) throw StructuralError("subset index out of range");
    d.rows_.push_back(rows_[i]);
    if (task_ == TaskKind::classification)
      d.labels_.push_back(labels_[i]);
    else
      std::copy(targets_.row(i).begin(), targets_.row(i).end(), d.targets_.row(r).begin());
    std::copy(dense_.row(i).begin(), dense_.row(i).end(), d.dense_.row(r).begin());
  }
  return d;
}

Dataset augment(const Dataset& data) {
  if (data.augmented_) throw StructuralError("dataset is already augmented");
  Dataset d = data;
  const auto slot = static_cast<std::uint32_t>(d.num_features_ + 1);
  for (auto& row : d.rows_) row.push_back({slot, -1.0});
  d.augmented_ = true;
  d.densify();
  return d;
}

Dataset Dataset::with_num_features(std::size_t num_features) const {
  if (augmented_) throw StructuralError("cannot widen an augmented dataset");
  if (num_features < num_features_)
    throw DataError("dataset uses " + std::to_string(num_features_) +
                    " features, cannot narrow to " + std::to_string(num_features));
  Dataset d = *this;
  d.num_features_ = num_features;
  d.densify();
  return d;
}

Dataset Dataset::with_class_values(std::vector<double> class_values) const {
  if (task_ != TaskKind::classification)
    throw StructuralError("class values apply to classification data only");
  std::vector<int> remap(class_values_.size());
  for (std::size_t c = 0; c < class_values_.size(); ++c) {
    auto it = std::lower_bound(class_values.begin(), class_values.end(), class_values_[c]);
    if (it == class_values.end() || *it != class_values_[c]) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", class_values_[c]);
      throw DataError(std::string("label ") + buf + " not among the model's classes");
    }
    remap[c] = static_cast<int>(it - class_values.begin()) + 1;
  }
  Dataset d = *this;
  d.class_values_ = std::move(class_values);
  for (int& y : d.labels_) y = remap[y - 1];
  return d;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.task_ != b.task_ || a.num_features_ != b.num_features_ ||
      a.augmented_ != b.augmented_ || a.class_values_ != b.class_values_ ||
      a.num_outputs() != b.num_outputs())
    throw StructuralError("cannot concatenate datasets of different shape");
  Dataset d = a;
  d.rows_.insert(d.rows_.end(), b.rows_.begin(), b.rows_.end());
  d.labels_.insert(d.labels_.end(), b.labels_.begin(), b.labels_.end());
  if (a.task_ == TaskKind::regression) {
    Matrix t(a.size() + b.size(), a.num_outputs());
    std::copy(a.targets_.data().begin(), a.targets_.data().end(), t.data().begin());
    std::copy(b.targets_.data().begin(), b.targets_.data().end(),
              t.data().begin() + static_cast<std::ptrdiff_t>(a.targets_.data().size()));
    d.targets_ = std::move(t);
  }
  d.densify();
  return d;
}

namespace {

struct Token {
  std::size_t column;  // 1-based
  std::string_view text;
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) tokens.push_back({start + 1, line.substr(start, i - start)});
  }
  return tokens;
}

// Parses the whole token as a double; false if anything is left over.
bool parse_double(std::string_view text, double& out) {
  const std::string buf(text);
  char* end = nullptr;
  out = std::strtod(buf.c_str(), &end);
  return !buf.empty() && end == buf.c_str() + buf.size();
}

bool parse_index(std::string_view text, std::uint32_t& out) {
  if (text.empty() || text.size() > 9) return false;
  std::uint32_t v = 0;
  for (char c : text) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + static_cast<std::uint32_t>(c - '0');
  }
  out = v;
  return true;
}

std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Dataset parse_libsvm(std::istream& in, TaskKind task) {
  std::vector<SparseRow> rows;
  std::vector<double> raw_labels;
  std::size_t max_index = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    const auto tokens = tokenize(view);
    if (tokens.empty()) continue;

    double label = 0.0;
    if (!parse_double(tokens[0].text, label))
      throw ParseError("malformed label '" + std::string(tokens[0].text) + "'", line_no,
                       tokens[0].column);
    if (!std::isfinite(label)) throw ParseError("non-finite label", line_no, tokens[0].column);

    SparseRow row;
    row.reserve(tokens.size() - 1);
    std::uint32_t prev = 0;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto& tok = tokens[t];
      const auto colon = tok.text.find(':');
      if (colon == std::string_view::npos)
        throw ParseError("malformed token '" + std::string(tok.text) + "'", line_no, tok.column);
      std::uint32_t index = 0;
      if (!parse_index(tok.text.substr(0, colon), index))
        throw ParseError("malformed feature index '" + std::string(tok.text) + "'", line_no,
                         tok.column);
      if (index == 0) throw ParseError("feature index must be >= 1", line_no, tok.column);
      double value = 0.0;
      const std::size_t value_column = tok.column + colon + 1;
      if (!parse_double(tok.text.substr(colon + 1), value))
        throw ParseError("malformed feature value '" + std::string(tok.text) + "'", line_no,
                         value_column);
      if (!std::isfinite(value)) throw ParseError("non-finite value", line_no, value_column);
      if (index <= prev) throw ParseError("non-increasing index", line_no, tok.column);
      prev = index;
      row.push_back({index, value});
    }
    max_index = std::max<std::size_t>(max_index, prev);
    rows.push_back(std::move(row));
    raw_labels.push_back(label);
  }
  if (in.bad()) throw DataError("read error while parsing LibSVM data");

  if (task == TaskKind::regression) {
    Matrix targets(raw_labels.size(), 1);
    for (std::size_t i = 0; i < raw_labels.size(); ++i) targets(i, 0) = raw_labels[i];
    return Dataset::regression(max_index, std::move(rows), std::move(targets));
  }
  std::vector<double> classes = raw_labels;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  std::vector<int> labels(raw_labels.size());
  for (std::size_t i = 0; i < raw_labels.size(); ++i)
    labels[i] = static_cast<int>(std::lower_bound(classes.begin(), classes.end(), raw_labels[i]) -
                                 classes.begin()) + 1;
  return Dataset::classification(max_index, std::move(classes), std::move(rows),
                                 std::move(labels));
}

Dataset parse_libsvm_string(const std::string& text, TaskKind task) {
  std::istringstream in(text);
  return parse_libsvm(in, task);
}

Dataset load_libsvm(const std::string& path, TaskKind task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  return parse_libsvm(in, task);
}

void write_libsvm(std::ostream& out, const Dataset& data) {
  if (data.task() == TaskKind::regression && data.num_outputs() != 1)
    throw StructuralError("LibSVM format holds scalar regression targets only");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double raw = data.task() == TaskKind::classification
                           ? data.class_values()[data.label(i) - 1]
                           : data.target(i)[0];
    out << format_g17(raw);
    for (const auto& e : data.sparse_row(i)) out << ' ' << e.index << ':' << format_g17(e.value);
    out << '\n';
  }
}

std::string write_libsvm_string(const Dataset& data) {
  std::ostringstream out;
  write_libsvm(out, data);
  return out.str();
}

void align(std::span<Dataset> parts) {
  if (parts.empty()) return;
  std::size_t p = 0;
  std::vector<double> classes;
  for (const auto& d : parts) {
    if (d.augmented()) throw StructuralError("align before augmenting");
    if (d.task() != parts[0].task()) throw DataError("datasets mix classification and regression");
    if (d.task() == TaskKind::regression && d.num_outputs() != parts[0].num_outputs())
      throw DataError("regression targets differ in dimension");
    p = std::max(p, d.num_features());
    classes.insert(classes.end(), d.class_values().begin(), d.class_values().end());
  }
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  for (auto& d : parts) {
    d = d.with_num_features(p);
    if (d.task() == TaskKind::classification) d = d.with_class_values(classes);
  }
}

std::vector<std::vector<std::size_t>> split_indices(std::size_t n,
                                                    std::span<const double> fractions,
                                                    std::uint64_t seed) {
  if (fractions.empty()) throw UsageError("split needs at least one fraction");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw UsageError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("split fractions must sum to 1");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::size_t>> parts(fractions.size());
  std::size_t begin = 0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    std::size_t count = k + 1 == fractions.size()
                            ? n - begin
                            : static_cast<std::size_t>(
                                  std::floor(static_cast<double>(n) * fractions[k] + 1e-9));
    count = std::min(count, n - begin);
    parts[k].assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                    order.begin() + static_cast<std::ptrdiff_t>(begin + count));
    begin += count;
  }
  return parts;
}

std::vector<Dataset> split_dataset(const Dataset& data, std::span<const double> fractions,
                                   std::uint64_t seed) {
  std::vector<Dataset> out;
  for (const auto& idx : split_indices(data.size(), fractions, seed))
    out.push_back(data.subset(idx));
  return out;
}

Dataset make_rotated_xor(std::size_t n, double noise, std::uint64_t seed, double angle_deg) {
  if (n < 4) throw UsageError("rotated XOR needs at least 4 points");
  if (noise < 0.0 || noise > 1.0) throw UsageError("noise must be in [0, 1]");
  const double a = angle_deg * std::acos(-1.0) / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<SparseRow> rows;
  std::vector<int> labels;
  rows.reserve(n);
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = coord(rng);
    const double y = coord(rng);
    const double u = c * x + s * y;
    const double v = -s * x + c * y;
    int label = ((u >= 0.0) != (v >= 0.0)) ? 2 : 1;
    if (unit(rng) < noise) label = 3 - label;
    rows.push_back({{1, x}, {2, y}});
    labels.push_back(label);
  }
  return Dataset::classification(2, {1.0, 2.0}, std::move(rows), std::move(labels));
}

Dataset make_random_linear(std::size_t n, std::size_t p, std::size_t k, std::uint64_t seed) {
  if (p == 0 || k < 2) throw UsageError("random linear data needs p >= 1 and k >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Matrix map(k, p);
  for (double& v : map.data()) v = gauss(rng);
  std::vector<SparseRow> rows(n);
  std::vector<int> labels(n);
  std::vector<double> x(p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < p; ++f) {
      x[f] = gauss(rng);
      rows[i].push_back({static_cast<std::uint32_t>(f + 1), x[f]});
    }
    std::size_t best = 0;
    double best_score = dot(map.row(0), x);
    for (std::size_t c = 1; c < k; ++c) {
      const double sc = dot(map.row(c), x);
      if (sc > best_score) best = c, best_score = sc;
    }
    labels[i] = static_cast<int>(best) + 1;
  }
  std::vector<double> classes(k);
  std::iota(classes.begin(), classes.end(), 1.0);
  return Dataset::classification(p, std::move(classes), std::move(rows), std::move(labels));
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content_hash(bytes);
}

}  // namespace obtree
