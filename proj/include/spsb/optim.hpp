#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spsb/graph.hpp"

namespace spsb::optim {

// params - lr * grad. Throws InvariantError on length mismatch.
std::vector<double> sgd_step(std::span<const double> params, std::span<const double> grad,
                             double lr);

struct AdamState {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamState(std::size_t n, double lr = 0.01) : lr(lr), m(n, 0.0), v(n, 0.0) {}
};

// Bias-corrected adam update; advances state.t by one.
std::vector<double> adam_step(AdamState& state, std::span<const double> params,
                              std::span<const double> grad);

enum class Kind { Sgd, Adam };

std::string to_string(Kind kind);
Kind parse_kind(std::string_view name);

// Applies one update to every registered parameter in place.
class Optimizer {
 public:
  Optimizer(Kind kind, double lr, std::vector<graph::Parameter*> params);

  void step(const graph::Gradients& grads);

  Kind kind() const { return kind_; }
  double learning_rate() const { return lr_; }

 private:
  Kind kind_;
  double lr_;
  std::vector<graph::Parameter*> params_;
  std::vector<AdamState> adam_;
};

}  // namespace spsb::optim
