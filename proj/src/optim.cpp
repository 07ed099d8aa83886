#include "spsb/optim.hpp"

#include <cmath>

#include "spsb/error.hpp"

namespace spsb::optim {

namespace {

void check_lengths(std::string_view op, std::size_t params, std::size_t grad) {
  if (params != grad) {
    throw InvariantError(std::string(op) + ": " + std::to_string(params) + " parameters but " +
                         std::to_string(grad) + " gradient entries");
  }
}

}  // namespace

std::vector<double> sgd_step(std::span<const double> params, std::span<const double> grad,
                             double lr) {
  check_lengths("sgd_step", params.size(), grad.size());
  std::vector<double> out(params.begin(), params.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= lr * grad[i];
  return out;
}

std::vector<double> adam_step(AdamState& state, std::span<const double> params,
                              std::span<const double> grad) {
  check_lengths("adam_step", params.size(), grad.size());
  check_lengths("adam_step", state.m.size(), grad.size());
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  std::vector<double> out(params.begin(), params.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    out[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
  return out;
}

std::string to_string(Kind kind) { return kind == Kind::Sgd ? "sgd" : "adam"; }

Kind parse_kind(std::string_view name) {
  if (name == "sgd") return Kind::Sgd;
  if (name == "adam") return Kind::Adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

Optimizer::Optimizer(Kind kind, double lr, std::vector<graph::Parameter*> params)
    : kind_(kind), lr_(lr), params_(std::move(params)) {
  if (!std::isfinite(lr) || lr < 0.0) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (kind_ == Kind::Adam) {
    for (const auto* p : params_) adam_.emplace_back(p->size(), lr_);
  }
}

void Optimizer::step(const graph::Gradients& grads) {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    graph::Parameter& p = *params_[k];
    const auto g = grads.of(p);
    const auto next = kind_ == Kind::Sgd ? sgd_step(p.values(), g, lr_)
                                         : adam_step(adam_[k], p.values(), g);
    std::copy(next.begin(), next.end(), p.values().begin());
  }
}

}  // namespace spsb::optim
