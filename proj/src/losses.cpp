#include "obtree/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "obtree/error.hpp"

namespace obtree {

std::string_view to_string(LossKind kind) {
  return kind == LossKind::log ? "log" : "sqr";
}

LossKind parse_loss_kind(std::string_view text) {
  if (text == "log") return LossKind::log;
  if (text == "sqr") return LossKind::squared;
  throw UsageError("unknown loss kind '" + std::string(text) + "'");
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw StructuralError("log_sum_exp of empty vector");
  const double top = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double a : v) {
    if (!std::isfinite(a)) throw NumericError("non-finite leaf parameter");
    s += std::exp(a - top);
  }
  return top + std::log(s);
}

void softmax(std::span<const double> theta, std::span<double> out) {
  if (out.size() != theta.size()) throw StructuralError("softmax: output size mismatch");
  if (theta.empty()) throw StructuralError("softmax of empty vector");
  for (double t : theta)
    if (!std::isfinite(t)) throw NumericError("non-finite leaf parameter");
  const double top = *std::max_element(theta.begin(), theta.end());
  double s = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    out[i] = std::exp(theta[i] - top);
    s += out[i];
  }
  for (double& o : out) o /= s;
}

std::vector<double> softmax(std::span<const double> theta) {
  std::vector<double> out(theta.size());
  softmax(theta, out);
  return out;
}

namespace {

void check_label(std::span<const double> theta, int y) {
  if (y < 1 || static_cast<std::size_t>(y) > theta.size())
    throw StructuralError("label " + std::to_string(y) + " out of range 1.." +
                          std::to_string(theta.size()));
}

}  // namespace

double log_loss(std::span<const double> theta, int y) {
  check_label(theta, y);
  // lse >= max(theta) >= theta[y]; clamp rounding noise at zero.
  return std::max(0.0, log_sum_exp(theta) - theta[y - 1]);
}

void log_loss_grad(std::span<const double> theta, int y, std::span<double> out) {
  check_label(theta, y);
  softmax(theta, out);
  out[y - 1] -= 1.0;
}

std::vector<double> log_loss_grad(std::span<const double> theta, int y) {
  std::vector<double> out(theta.size());
  log_loss_grad(theta, y, out);
  return out;
}

double sqr_loss(std::span<const double> theta, std::span<const double> y) {
  if (theta.size() != y.size()) throw StructuralError("sqr_loss: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double r = theta[i] - y[i];
    s += r * r;
  }
  return s;
}

void sqr_loss_grad(std::span<const double> theta, std::span<const double> y,
                   std::span<double> out) {
  if (theta.size() != y.size() || out.size() != y.size())
    throw StructuralError("sqr_loss_grad: dimension mismatch");
  for (std::size_t i = 0; i < theta.size(); ++i) out[i] = 2.0 * (theta[i] - y[i]);
}

std::vector<double> sqr_loss_grad(std::span<const double> theta,
                                  std::span<const double> y) {
  std::vector<double> out(theta.size());
  sqr_loss_grad(theta, y, out);
  return out;
}

double loss_value(LossKind kind, std::span<const double> theta, const ExampleRef& ex) {
  return kind == LossKind::log ? log_loss(theta, ex.label) : sqr_loss(theta, ex.target);
}

void loss_gradient(LossKind kind, std::span<const double> theta, const ExampleRef& ex,
                   std::span<double> out) {
  if (kind == LossKind::log)
    log_loss_grad(theta, ex.label, out);
  else
    sqr_loss_grad(theta, ex.target, out);
}

}  // namespace obtree
