#include "spsb/diff.hpp"

#include <cmath>

#include "spsb/error.hpp"

namespace spsb::diff {

std::vector<double> Jacobian::vjp(std::span<const double> upstream) const {
  if (upstream.size() != rows_) {
    throw InvariantError("vjp: upstream length " + std::to_string(upstream.size()) +
                         " != jacobian rows " + std::to_string(rows_));
  }
  std::vector<double> out(cols_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    const double u = upstream[r];
    if (u == 0.0) continue;
    for (std::size_t c = 0; c < cols_; ++c) out[c] += u * data_[r * cols_ + c];
  }
  return out;
}

Jacobian& Jacobian::operator+=(const Jacobian& other) {
  if (other.rows_ != rows_ || other.cols_ != cols_) {
    throw InvariantError("jacobian shape mismatch in +=");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Jacobian& Jacobian::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool Jacobian::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

PerturbationVector::PerturbationVector(std::vector<double> signs) : signs_(std::move(signs)) {
  for (double s : signs_) {
    if (s != 1.0 && s != -1.0) throw InvariantError("perturbation entries must be +-1");
  }
}

PerturbationVector sample_delta(std::size_t n, Rng& rng) {
  std::vector<double> signs(n);
  for (double& s : signs) s = (rng() >> 63) ? 1.0 : -1.0;
  return PerturbationVector(std::move(signs));
}

namespace {

void check_epsilon(double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("spsb epsilon must be positive, got " + std::to_string(epsilon));
  }
}

Jacobian outer_difference(std::span<const double> f_plus, std::span<const double> f_minus,
                          double scale, const PerturbationVector& delta) {
  Jacobian j(f_plus.size(), delta.size());
  const auto& inv = delta.inverse();
  for (std::size_t r = 0; r < f_plus.size(); ++r) {
    const double d = (f_plus[r] - f_minus[r]) * scale;
    for (std::size_t c = 0; c < delta.size(); ++c) j(r, c) = d * inv[c];
  }
  return j;
}

std::vector<double> shifted(std::span<const double> x, std::span<const double> dir,
                            double step) {
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += step * dir[i];
  return out;
}

}  // namespace

Jacobian spsb_jacobian(const VectorFunction& f, std::span<const double> x,
                       double epsilon, const PerturbationVector& delta) {
  check_epsilon(epsilon);
  if (delta.size() != x.size()) {
    throw InvariantError("perturbation length does not match parameter count");
  }
  const auto f_plus = f(shifted(x, delta.values(), epsilon));
  const auto f_minus = f(shifted(x, delta.values(), -epsilon));
  if (f_plus.size() != f_minus.size()) throw InvariantError("function output length changed");
  return outer_difference(f_plus, f_minus, 1.0 / (2.0 * epsilon), delta);
}

Jacobian spsb_jacobian(const VectorFunction& f, std::span<const double> x,
                       double epsilon, Rng& rng) {
  check_epsilon(epsilon);
  return spsb_jacobian(f, x, epsilon, sample_delta(x.size(), rng));
}

Jacobian finite_diff_jacobian(const VectorFunction& f, std::span<const double> x,
                              double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  Jacobian j;
  std::vector<double> point(x.begin(), x.end());
  for (std::size_t c = 0; c < x.size(); ++c) {
    point[c] = x[c] + h;
    const auto fp = f(point);
    point[c] = x[c] - h;
    const auto fm = f(point);
    point[c] = x[c];
    if (c == 0) j = Jacobian(fp.size(), x.size());
    for (std::size_t r = 0; r < fp.size(); ++r) j(r, c) = (fp[r] - fm[r]) / (2.0 * h);
  }
  return j;
}

namespace {

VectorFunction bind_circuit(const qsim::Circuit& circuit, std::span<const double> inputs,
                            const qsim::RunOptions& options) {
  return [&circuit, inputs, options](std::span<const double> params) {
    return qsim::run_circuit(circuit, params, inputs, options);
  };
}

}  // namespace

Jacobian spsb_jacobian(const qsim::Circuit& circuit, std::span<const double> params,
                       std::span<const double> inputs, double epsilon, Rng& rng,
                       const qsim::RunOptions& options) {
  return spsb_jacobian(bind_circuit(circuit, inputs, options), params, epsilon, rng);
}

Jacobian param_shift_jacobian(const qsim::Circuit& circuit,
                              std::span<const double> params,
                              std::span<const double> inputs,
                              const qsim::RunOptions& options) {
  // The two-term rule with c = 1/2 and shift pi/2 holds for a parameter that
  // enters exactly one Pauli rotation (RX, RZ, RZZ).
  std::vector<int> uses(circuit.n_trainable(), 0);
  for (const auto& gate : circuit.gates()) {
    if (gate.slot != qsim::SlotKind::Trainable) continue;
    if (!gate.parametric()) {
      throw ConfigError("parameter-shift: gate " + qsim::to_string(gate.kind) +
                        " has no Pauli-rotation generator");
    }
    ++uses[gate.slot_index];
  }
  for (std::size_t j = 0; j < uses.size(); ++j) {
    if (uses[j] != 1) {
      throw ConfigError("parameter-shift: trainable slot " + std::to_string(j) +
                        " drives " + std::to_string(uses[j]) +
                        " gates; the two-term rule needs exactly one");
    }
  }

  constexpr double kShift = 1.57079632679489661923;  // pi/2
  const auto f = bind_circuit(circuit, inputs, options);
  Jacobian j(static_cast<std::size_t>(circuit.n_qubits()), params.size());
  std::vector<double> point(params.begin(), params.end());
  for (std::size_t c = 0; c < params.size(); ++c) {
    point[c] = params[c] + kShift;
    const auto fp = f(point);
    point[c] = params[c] - kShift;
    const auto fm = f(point);
    point[c] = params[c];
    for (std::size_t r = 0; r < fp.size(); ++r) j(r, c) = 0.5 * (fp[r] - fm[r]);
  }
  return j;
}

Jacobian finite_diff_jacobian(const qsim::Circuit& circuit,
                              std::span<const double> params,
                              std::span<const double> inputs, double h,
                              const qsim::RunOptions& options) {
  if (params.empty()) return Jacobian(static_cast<std::size_t>(circuit.n_qubits()), 0);
  return finite_diff_jacobian(bind_circuit(circuit, inputs, options), params, h);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Spsb: return "spsb";
    case Method::ParamShift: return "param-shift";
    case Method::FiniteDiff: return "finite-diff";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "spsb") return Method::Spsb;
  if (name == "param-shift") return Method::ParamShift;
  if (name == "finite-diff") return Method::FiniteDiff;
  throw ConfigError("unknown differentiator '" + std::string(name) +
                    "' (expected spsb, param-shift or finite-diff)");
}

void validate(const DiffConfig& config) {
  check_epsilon(config.epsilon);
  if (config.spsb_samples < 1) throw ConfigError("spsb_samples must be at least 1");
  if (!(config.fd_step > 0.0)) throw ConfigError("finite-difference step must be positive");
}

Jacobian jacobian(const DiffConfig& config, const qsim::Circuit& circuit,
                  std::span<const double> params, std::span<const double> inputs,
                  Rng& rng, const qsim::RunOptions& options) {
  switch (config.method) {
    case Method::Spsb: {
      Jacobian j = spsb_jacobian(circuit, params, inputs, config.epsilon, rng, options);
      for (int k = 1; k < config.spsb_samples; ++k) {
        j += spsb_jacobian(circuit, params, inputs, config.epsilon, rng, options);
      }
      if (config.spsb_samples > 1) j *= 1.0 / config.spsb_samples;
      return j;
    }
    case Method::ParamShift:
      return param_shift_jacobian(circuit, params, inputs, options);
    case Method::FiniteDiff:
      return finite_diff_jacobian(circuit, params, inputs, config.fd_step, options);
  }
  throw InvariantError("unhandled differentiator");
}

std::uint64_t evals_per_jacobian(const DiffConfig& config, std::size_t n_trainable) {
  switch (config.method) {
    case Method::Spsb: return 2ULL * static_cast<std::uint64_t>(config.spsb_samples);
    case Method::ParamShift:
    case Method::FiniteDiff: return 2ULL * n_trainable;
  }
  return 0;
}

}  // namespace spsb::diff
