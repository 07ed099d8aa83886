// Test-only reference computations, independent of the library code paths
// they check.
#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "spsb/qsim.hpp"
#include "spsb/rng.hpp"

namespace spsb::testing {

using Complex = std::complex<double>;
using DenseMatrix = std::vector<std::vector<Complex>>;

// Tr(rho Z_q) with rho = |psi><psi| and Z_q built as a Kronecker product.
inline double density_matrix_z(std::span<const Complex> psi, int n_qubits, int qubit) {
  const std::size_t dim = psi.size();
  DenseMatrix op{{1.0}};
  for (int q = n_qubits - 1; q >= 0; --q) {
    const Complex d0 = 1.0;
    const Complex d1 = q == qubit ? -1.0 : 1.0;
    DenseMatrix next(op.size() * 2, std::vector<Complex>(op.size() * 2, 0.0));
    for (std::size_t r = 0; r < op.size(); ++r) {
      for (std::size_t c = 0; c < op.size(); ++c) {
        next[2 * r][2 * c] = op[r][c] * d0;
        next[2 * r + 1][2 * c + 1] = op[r][c] * d1;
      }
    }
    op = std::move(next);
  }
  Complex trace = 0.0;
  for (std::size_t r = 0; r < dim; ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      const Complex rho_cr = psi[c] * std::conj(psi[r]);
      trace += rho_cr * op[r][c];
    }
  }
  return trace.real();
}

// Random gate list over the full gate set, all angles fixed.
inline std::vector<qsim::Gate> random_gates(int n_qubits, int n_gates, Rng& rng) {
  std::vector<qsim::Gate> gates;
  for (int g = 0; g < n_gates; ++g) {
    const int q0 = static_cast<int>(rng() % static_cast<unsigned>(n_qubits));
    const double angle = uniform(rng, -6.3, 6.3);
    switch (n_qubits > 1 ? rng() % 4 : rng() % 3) {
      case 0: gates.push_back(qsim::Gate::h(q0)); break;
      case 1: gates.push_back(qsim::Gate::fixed(qsim::GateKind::RX, {q0, -1}, angle)); break;
      case 2: gates.push_back(qsim::Gate::fixed(qsim::GateKind::RZ, {q0, -1}, angle)); break;
      default: {
        int q1 = static_cast<int>(rng() % static_cast<unsigned>(n_qubits - 1));
        if (q1 >= q0) ++q1;
        gates.push_back(qsim::Gate::fixed(qsim::GateKind::RZZ, {q0, q1}, angle));
      }
    }
  }
  return gates;
}

inline std::vector<double> random_vector(std::size_t n, double lo, double hi, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, lo, hi);
  return v;
}

// Central difference of a scalar function along coordinate i.
inline double central_difference(const std::function<double(std::vector<double>)>& f,
                                 std::vector<double> x, std::size_t i, double h) {
  const double xi = x[i];
  x[i] = xi + h;
  const double fp = f(x);
  x[i] = xi - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace spsb::testing
