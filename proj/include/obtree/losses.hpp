#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace obtree {

enum class LossKind { log, squared };

std::string_view to_string(LossKind kind);
// Accepts "log" and "sqr".
LossKind parse_loss_kind(std::string_view text);

// One training pair as seen by losses and inference. For log loss `label` is
// the 1-based class; for squared loss `target` holds the regression vector.
struct ExampleRef {
  std::span<const double> x;
  int label = 0;
  std::span<const double> target;
};

// log(sum(exp(v))) with the max subtracted before exponentiating.
double log_sum_exp(std::span<const double> v);
void softmax(std::span<const double> theta, std::span<double> out);
std::vector<double> softmax(std::span<const double> theta);

// -theta[y] + log(sum(exp(theta))). y is 1-based.
double log_loss(std::span<const double> theta, int y);
// softmax(theta) - e_y
void log_loss_grad(std::span<const double> theta, int y, std::span<double> out);
std::vector<double> log_loss_grad(std::span<const double> theta, int y);

// ||theta - y||^2 and its gradient 2(theta - y).
double sqr_loss(std::span<const double> theta, std::span<const double> y);
void sqr_loss_grad(std::span<const double> theta, std::span<const double> y,
                   std::span<double> out);
std::vector<double> sqr_loss_grad(std::span<const double> theta,
                                  std::span<const double> y);

// Loss-agnostic entry points used by inference and the optimizer.
double loss_value(LossKind kind, std::span<const double> theta, const ExampleRef& ex);
void loss_gradient(LossKind kind, std::span<const double> theta, const ExampleRef& ex,
                   std::span<double> out);

}  // namespace obtree
