#include "spsb/qsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spsb/error.hpp"

namespace spsb::qsim {

StateVector::StateVector(int n_qubits) : n_qubits_(n_qubits) {
  if (n_qubits < 1 || n_qubits > kMaxQubits) {
    throw ConfigError("qubit count " + std::to_string(n_qubits) +
                      " outside [1, " + std::to_string(kMaxQubits) + "]");
  }
  amplitudes_.assign(std::size_t{1} << n_qubits, Amplitude{0.0, 0.0});
  amplitudes_[0] = 1.0;
}

double StateVector::norm_squared() const {
  double sum = 0.0;
  for (const auto& a : amplitudes_) sum += std::norm(a);
  return sum;
}

StateVector new_state(int n_qubits) { return StateVector(n_qubits); }

Gate Gate::h(int q) { return Gate{GateKind::H, {q, -1}, SlotKind::Fixed, 0, 0.0}; }

Gate Gate::rx(int q, SlotKind slot, std::size_t index) {
  return Gate{GateKind::RX, {q, -1}, slot, index, 0.0};
}

Gate Gate::rz(int q, SlotKind slot, std::size_t index) {
  return Gate{GateKind::RZ, {q, -1}, slot, index, 0.0};
}

Gate Gate::rzz(int q0, int q1, SlotKind slot, std::size_t index) {
  return Gate{GateKind::RZZ, {q0, q1}, slot, index, 0.0};
}

Gate Gate::fixed(GateKind kind, std::array<int, 2> qubits, double angle) {
  if (kind != GateKind::RZZ) qubits[1] = -1;
  return Gate{kind, qubits, SlotKind::Fixed, 0, angle};
}

std::string to_string(GateKind kind) {
  switch (kind) {
    case GateKind::H: return "H";
    case GateKind::RX: return "RX";
    case GateKind::RZ: return "RZ";
    case GateKind::RZZ: return "RZZ";
  }
  return "?";
}

namespace {

void check_qubit(const StateVector& state, int q) {
  if (q < 0 || q >= state.n_qubits()) {
    throw InvariantError("qubit index " + std::to_string(q) + " out of range for " +
                         std::to_string(state.n_qubits()) + "-qubit state");
  }
}

// Kernels walk blocks of 2*mask indices; the first half of each block has
// the target bit clear. Complex products are written out to stay inline.
inline Amplitude mul(Amplitude a, Amplitude b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

void apply_h(std::span<Amplitude> amps, std::size_t mask) {
  constexpr double r = 0.70710678118654752440;
  for (std::size_t base = 0; base < amps.size(); base += 2 * mask) {
    for (std::size_t i = base; i < base + mask; ++i) {
      const Amplitude a = amps[i];
      const Amplitude b = amps[i + mask];
      amps[i] = {r * (a.real() + b.real()), r * (a.imag() + b.imag())};
      amps[i + mask] = {r * (a.real() - b.real()), r * (a.imag() - b.imag())};
    }
  }
}

void apply_rx(std::span<Amplitude> amps, std::size_t mask, double theta) {
  const double c = std::cos(theta / 2);
  const double s = std::sin(theta / 2);
  // [[c, -is], [-is, c]]
  for (std::size_t base = 0; base < amps.size(); base += 2 * mask) {
    for (std::size_t i = base; i < base + mask; ++i) {
      const Amplitude a = amps[i];
      const Amplitude b = amps[i + mask];
      amps[i] = {c * a.real() + s * b.imag(), c * a.imag() - s * b.real()};
      amps[i + mask] = {s * a.imag() + c * b.real(), c * b.imag() - s * a.real()};
    }
  }
}

void apply_rz(std::span<Amplitude> amps, std::size_t mask, double theta) {
  const Amplitude p0 = std::polar(1.0, -theta / 2);
  const Amplitude p1 = std::polar(1.0, theta / 2);
  for (std::size_t base = 0; base < amps.size(); base += 2 * mask) {
    for (std::size_t i = base; i < base + mask; ++i) {
      amps[i] = mul(amps[i], p0);
      amps[i + mask] = mul(amps[i + mask], p1);
    }
  }
}

void apply_rzz(std::span<Amplitude> amps, std::size_t m0, std::size_t m1, double theta) {
  const Amplitude phase[2] = {std::polar(1.0, -theta / 2), std::polar(1.0, theta / 2)};
  for (std::size_t i = 0; i < amps.size(); ++i) {
    const std::size_t parity = ((i & m0) != 0) ^ ((i & m1) != 0);
    amps[i] = mul(amps[i], phase[parity]);
  }
}

}  // namespace

void apply_gate(StateVector& state, const Gate& gate,
                std::optional<double> bound_angle) {
  check_qubit(state, gate.qubits[0]);
  if (gate.arity() == 2) {
    check_qubit(state, gate.qubits[1]);
    if (gate.qubits[0] == gate.qubits[1]) {
      throw InvariantError("two-qubit gate on repeated qubit " +
                           std::to_string(gate.qubits[0]));
    }
  }
  std::optional<double> angle = bound_angle;
  if (!angle && gate.slot == SlotKind::Fixed) angle = gate.angle;
  if (gate.parametric() && !angle) {
    throw InvariantError(to_string(gate.kind) + " gate on qubit " +
                         std::to_string(gate.qubits[0]) + " has no bound angle");
  }

  auto amps = state.amplitudes();
  const std::size_t mask = std::size_t{1} << gate.qubits[0];
  switch (gate.kind) {
    case GateKind::H: apply_h(amps, mask); break;
    case GateKind::RX: apply_rx(amps, mask, *angle); break;
    case GateKind::RZ: apply_rz(amps, mask, *angle); break;
    case GateKind::RZZ:
      apply_rzz(amps, mask, std::size_t{1} << gate.qubits[1], *angle);
      break;
  }
}

double expectation_z(const StateVector& state, int qubit) {
  check_qubit(state, qubit);
  const std::size_t mask = std::size_t{1} << qubit;
  const auto amps = state.amplitudes();
  double sum = 0.0;
  for (std::size_t i = 0; i < amps.size(); ++i) {
    const double p = std::norm(amps[i]);
    sum += (i & mask) ? -p : p;
  }
  return sum;
}

std::vector<double> all_expectations_z(const StateVector& state) {
  const auto amps = state.amplitudes();
  std::vector<double> p(amps.size());
  for (std::size_t i = 0; i < amps.size(); ++i) p[i] = std::norm(amps[i]);
  std::vector<double> out(static_cast<std::size_t>(state.n_qubits()));
  for (int q = 0; q < state.n_qubits(); ++q) {
    const std::size_t mask = std::size_t{1} << q;
    double sum = 0.0;
    for (std::size_t base = 0; base < p.size(); base += 2 * mask) {
      for (std::size_t i = base; i < base + mask; ++i) sum += p[i] - p[i + mask];
    }
    out[static_cast<std::size_t>(q)] = sum;
  }
  return out;
}

std::vector<double> sampled_expectations_z(const StateVector& state, int shots,
                                           Rng& rng) {
  if (shots < 1) throw ConfigError("shot count must be positive");
  const auto amps = state.amplitudes();
  std::vector<double> cumulative(amps.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < amps.size(); ++i) {
    acc += std::norm(amps[i]);
    cumulative[i] = acc;
  }
  std::vector<long> ones(static_cast<std::size_t>(state.n_qubits()), 0);
  for (int s = 0; s < shots; ++s) {
    const double u = uniform(rng, 0.0, acc);
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t b = it == cumulative.end()
                              ? cumulative.size() - 1
                              : static_cast<std::size_t>(it - cumulative.begin());
    for (int q = 0; q < state.n_qubits(); ++q) ones[q] += (b >> q) & 1U;
  }
  std::vector<double> out(ones.size());
  for (std::size_t q = 0; q < ones.size(); ++q) {
    out[q] = 1.0 - 2.0 * static_cast<double>(ones[q]) / shots;
  }
  return out;
}

Circuit::Circuit(int n_qubits, std::vector<Gate> gates, std::size_t n_trainable,
                 std::size_t n_inputs)
    : n_qubits_(n_qubits),
      gates_(std::move(gates)),
      n_trainable_(n_trainable),
      n_inputs_(n_inputs) {
  if (n_qubits < 1 || n_qubits > kMaxQubits) {
    throw ConfigError("circuit qubit count " + std::to_string(n_qubits) +
                      " outside [1, " + std::to_string(kMaxQubits) + "]");
  }
  std::vector<int> trainable_uses(n_trainable, 0);
  std::vector<int> input_uses(n_inputs, 0);
  for (std::size_t g = 0; g < gates_.size(); ++g) {
    const Gate& gate = gates_[g];
    const std::string where = "gate " + std::to_string(g) + " (" + to_string(gate.kind) + ")";
    for (int k = 0; k < gate.arity(); ++k) {
      if (gate.qubits[k] < 0 || gate.qubits[k] >= n_qubits) {
        throw InvariantError(where + ": qubit index out of range");
      }
    }
    if (gate.arity() == 2 && gate.qubits[0] == gate.qubits[1]) {
      throw InvariantError(where + ": repeated qubit");
    }
    if (!gate.parametric() && gate.slot != SlotKind::Fixed) {
      throw InvariantError(where + ": H carries no angle");
    }
    if (gate.slot == SlotKind::Trainable) {
      if (gate.slot_index >= n_trainable) throw InvariantError(where + ": trainable slot out of range");
      ++trainable_uses[gate.slot_index];
    } else if (gate.slot == SlotKind::Input) {
      if (gate.slot_index >= n_inputs) throw InvariantError(where + ": input slot out of range");
      ++input_uses[gate.slot_index];
    }
  }
  for (std::size_t j = 0; j < n_trainable; ++j) {
    if (trainable_uses[j] == 0) {
      throw InvariantError("trainable slot " + std::to_string(j) + " is never used");
    }
  }
  for (std::size_t j = 0; j < n_inputs; ++j) {
    if (input_uses[j] != 1) {
      throw InvariantError("input slot " + std::to_string(j) + " used " +
                           std::to_string(input_uses[j]) + " times, expected once");
    }
  }
}

std::optional<double> Circuit::bound_angle(const Gate& gate,
                                           std::span<const double> params,
                                           std::span<const double> inputs) const {
  if (!gate.parametric()) return std::nullopt;
  switch (gate.slot) {
    case SlotKind::Fixed: return gate.angle;
    case SlotKind::Trainable: return params[gate.slot_index];
    case SlotKind::Input: return inputs[gate.slot_index];
  }
  return std::nullopt;
}

Circuit build_iqp_circuit(int n_qubits, int n_layers) {
  if (n_qubits < 1 || n_qubits > kMaxQubits) {
    throw ConfigError("IQP circuit needs 1..24 qubits, got " + std::to_string(n_qubits));
  }
  if (n_layers < 1) {
    throw ConfigError("IQP circuit needs at least one layer, got " + std::to_string(n_layers));
  }
  std::vector<Gate> gates;
  for (int q = 0; q < n_qubits; ++q) gates.push_back(Gate::rx(q, SlotKind::Input, q));
  std::size_t slot = 0;
  for (int l = 0; l < n_layers; ++l) {
    for (int q = 0; q < n_qubits; ++q) gates.push_back(Gate::h(q));
    for (int q = 0; q < n_qubits; ++q) gates.push_back(Gate::rz(q, SlotKind::Trainable, slot++));
    for (int q = 0; q + 1 < n_qubits; ++q) {
      gates.push_back(Gate::fixed(GateKind::RZZ, {q, q + 1}, kIqpEntanglerAngle));
    }
  }
  return Circuit(n_qubits, std::move(gates), slot, static_cast<std::size_t>(n_qubits));
}

EvalCounter& global_eval_counter() {
  static EvalCounter counter;
  return counter;
}

namespace {

using Matrix2 = std::array<Amplitude, 4>;  // row-major 2x2

Matrix2 single_qubit_matrix(GateKind kind, double theta) {
  switch (kind) {
    case GateKind::H: {
      constexpr double r = 0.70710678118654752440;
      return {r, r, r, -r};
    }
    case GateKind::RX: {
      const Amplitude c{std::cos(theta / 2), 0.0};
      const Amplitude mis{0.0, -std::sin(theta / 2)};
      return {c, mis, mis, c};
    }
    case GateKind::RZ:
      return {std::polar(1.0, -theta / 2), 0.0, 0.0, std::polar(1.0, theta / 2)};
    case GateKind::RZZ: break;
  }
  throw InvariantError("not a single-qubit gate");
}

// Applies the leading single-qubit gates to per-qubit states and expands the
// resulting product state. Returns the index of the first unapplied gate.
std::size_t prepare_product_state(StateVector& state, const Circuit& circuit,
                                  std::span<const double> params,
                                  std::span<const double> inputs) {
  const int n = state.n_qubits();
  std::vector<std::array<Amplitude, 2>> local(static_cast<std::size_t>(n), {1.0, 0.0});
  const auto gates = circuit.gates();
  std::size_t g = 0;
  for (; g < gates.size() && gates[g].arity() == 1; ++g) {
    const Gate& gate = gates[g];
    const Matrix2 m = single_qubit_matrix(gate.kind, circuit.bound_angle(gate, params, inputs).value_or(0.0));
    auto& v = local[static_cast<std::size_t>(gate.qubits[0])];
    v = {mul(m[0], v[0]) + mul(m[1], v[1]), mul(m[2], v[0]) + mul(m[3], v[1])};
  }
  auto amps = state.amplitudes();
  amps[0] = 1.0;
  for (int q = 0; q < n; ++q) {
    const std::size_t half = std::size_t{1} << q;
    const auto& v = local[static_cast<std::size_t>(q)];
    for (std::size_t b = 0; b < half; ++b) {
      amps[b + half] = mul(amps[b], v[1]);
      amps[b] = mul(amps[b], v[0]);
    }
  }
  return g;
}

bool is_diagonal(GateKind kind) { return kind == GateKind::RZ || kind == GateKind::RZZ; }

// Multiplies the state by the product of a run of RZ/RZZ gates. The phase
// table is built bit by bit: index b + 2^q differs from b < 2^q in bit q only,
// and all bits above q are still clear, so each gate touching q contributes a
// ratio that depends on at most one known lower bit.
void apply_diagonal_run(StateVector& state, std::span<const Gate> run, const Circuit& circuit,
                        std::span<const double> params, std::span<const double> inputs) {
  const int n = state.n_qubits();
  struct Flip {
    int other;              // -1 for RZ
    Amplitude when_clear;   // ratio if bit `other` is 0 (or always, for RZ)
    Amplitude when_set;
  };
  std::vector<std::vector<Flip>> flips(static_cast<std::size_t>(n));
  Amplitude base{1.0, 0.0};
  for (const Gate& gate : run) {
    const double theta = *circuit.bound_angle(gate, params, inputs);
    base = mul(base, std::polar(1.0, -theta / 2));
    if (gate.kind == GateKind::RZ) {
      flips[static_cast<std::size_t>(gate.qubits[0])].push_back(
          {-1, std::polar(1.0, theta), std::polar(1.0, theta)});
    } else {
      const int hi = std::max(gate.qubits[0], gate.qubits[1]);
      const int lo = std::min(gate.qubits[0], gate.qubits[1]);
      flips[static_cast<std::size_t>(hi)].push_back(
          {lo, std::polar(1.0, theta), std::polar(1.0, -theta)});
      flips[static_cast<std::size_t>(lo)].push_back(
          {-1, std::polar(1.0, theta), std::polar(1.0, theta)});
    }
  }
  std::vector<Amplitude> phase(state.dim());
  phase[0] = base;
  for (int q = 0; q < n; ++q) {
    const std::size_t half = std::size_t{1} << q;
    const auto& fq = flips[static_cast<std::size_t>(q)];
    for (std::size_t b = 0; b < half; ++b) {
      Amplitude f = phase[b];
      for (const Flip& flip : fq) {
        const bool set = flip.other >= 0 && ((b >> flip.other) & 1U);
        f = mul(f, set ? flip.when_set : flip.when_clear);
      }
      phase[b + half] = f;
    }
  }
  auto amps = state.amplitudes();
  for (std::size_t b = 0; b < amps.size(); ++b) amps[b] = mul(amps[b], phase[b]);
}

}  // namespace

StateVector simulate(const Circuit& circuit, std::span<const double> params,
                     std::span<const double> inputs) {
  if (params.size() != circuit.n_trainable()) {
    throw InvariantError("simulate: got " + std::to_string(params.size()) +
                         " parameters, circuit has " + std::to_string(circuit.n_trainable()));
  }
  if (inputs.size() != circuit.n_inputs()) {
    throw InvariantError("simulate: got " + std::to_string(inputs.size()) +
                         " inputs, circuit has " + std::to_string(circuit.n_inputs()));
  }
  StateVector state(circuit.n_qubits());
  const auto gates = circuit.gates();
  std::size_t g = prepare_product_state(state, circuit, params, inputs);
  while (g < gates.size()) {
    if (is_diagonal(gates[g].kind)) {
      std::size_t end = g;
      while (end < gates.size() && is_diagonal(gates[end].kind)) ++end;
      apply_diagonal_run(state, gates.subspan(g, end - g), circuit, params, inputs);
      g = end;
    } else {
      apply_gate(state, gates[g], circuit.bound_angle(gates[g], params, inputs));
      ++g;
    }
  }
  return state;
}

StateVector simulate_gatewise(const Circuit& circuit, std::span<const double> params,
                              std::span<const double> inputs) {
  StateVector state(circuit.n_qubits());
  for (const Gate& gate : circuit.gates()) {
    apply_gate(state, gate, circuit.bound_angle(gate, params, inputs));
  }
  return state;
}

std::vector<double> run_circuit(const Circuit& circuit, std::span<const double> params,
                                std::span<const double> inputs, const RunOptions& options) {
  if (params.size() != circuit.n_trainable()) {
    throw InvariantError("run_circuit: got " + std::to_string(params.size()) +
                         " parameters, circuit has " + std::to_string(circuit.n_trainable()));
  }
  if (inputs.size() != circuit.n_inputs()) {
    throw InvariantError("run_circuit: got " + std::to_string(inputs.size()) +
                         " inputs, circuit has " + std::to_string(circuit.n_inputs()));
  }
  const StateVector state = simulate(circuit, params, inputs);
  (options.counter ? *options.counter : global_eval_counter()).add();
  if (options.shots > 0) {
    if (!options.shot_rng) throw InvariantError("shot sampling needs an RNG stream");
    return sampled_expectations_z(state, options.shots, *options.shot_rng);
  }
  return all_expectations_z(state);
}

}  // namespace spsb::qsim
