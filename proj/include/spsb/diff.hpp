// Jacobian estimators for circuit outputs with respect to trainable angles.
//
//   spsb          one random +-1 direction, two evaluations regardless of the
//                 parameter count: J ~ (f(x+eD) - f(x-eD)) / (2e) (outer) D^-1
//   param-shift   exact for Pauli rotations, 2 evaluations per parameter
//   finite-diff   central differences, used as a test oracle
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spsb/qsim.hpp"
#include "spsb/rng.hpp"

namespace spsb::diff {

// m x n, row-major. Entry (i, j) = d f_i / d x_j.
class Jacobian {
 public:
  Jacobian() = default;
  Jacobian(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const double> data() const { return data_; }

  // upstream^T J, length cols().
  std::vector<double> vjp(std::span<const double> upstream) const;

  Jacobian& operator+=(const Jacobian& other);
  Jacobian& operator*=(double s);

  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Rademacher direction; every entry is exactly -1 or +1.
class PerturbationVector {
 public:
  // Throws InvariantError if any entry is not +-1.
  explicit PerturbationVector(std::vector<double> signs);

  std::size_t size() const { return signs_.size(); }
  double operator[](std::size_t i) const { return signs_[i]; }
  std::span<const double> values() const { return signs_; }
  // Element-wise inverse; equal to the vector itself.
  const PerturbationVector& inverse() const { return *this; }

 private:
  std::vector<double> signs_;
};

PerturbationVector sample_delta(std::size_t n, Rng& rng);

using VectorFunction = std::function<std::vector<double>(std::span<const double>)>;

// Generic forms, usable with any vector function.
Jacobian spsb_jacobian(const VectorFunction& f, std::span<const double> x,
                       double epsilon, const PerturbationVector& delta);
Jacobian spsb_jacobian(const VectorFunction& f, std::span<const double> x,
                       double epsilon, Rng& rng);
Jacobian finite_diff_jacobian(const VectorFunction& f, std::span<const double> x,
                              double h = 1e-5);

// Circuit forms. Every circuit execution goes through run_circuit and is
// therefore counted.
Jacobian spsb_jacobian(const qsim::Circuit& circuit, std::span<const double> params,
                       std::span<const double> inputs, double epsilon, Rng& rng,
                       const qsim::RunOptions& options = {});
Jacobian param_shift_jacobian(const qsim::Circuit& circuit,
                              std::span<const double> params,
                              std::span<const double> inputs,
                              const qsim::RunOptions& options = {});
Jacobian finite_diff_jacobian(const qsim::Circuit& circuit,
                              std::span<const double> params,
                              std::span<const double> inputs, double h = 1e-5,
                              const qsim::RunOptions& options = {});

enum class Method { Spsb, ParamShift, FiniteDiff };

std::string to_string(Method m);
// Accepts "spsb", "param-shift", "finite-diff"; throws ConfigError.
Method parse_method(std::string_view name);

struct DiffConfig {
  Method method = Method::Spsb;
  double epsilon = 0.01;   // spsb shift
  int spsb_samples = 1;    // independent spsb estimates averaged per call
  double fd_step = 1e-5;   // finite-diff step
};

// Throws ConfigError on non-positive epsilon / step / sample count.
void validate(const DiffConfig& config);

Jacobian jacobian(const DiffConfig& config, const qsim::Circuit& circuit,
                  std::span<const double> params, std::span<const double> inputs,
                  Rng& rng, const qsim::RunOptions& options = {});

// Circuit evaluations one jacobian() call costs.
std::uint64_t evals_per_jacobian(const DiffConfig& config, std::size_t n_trainable);

}  // namespace spsb::diff
