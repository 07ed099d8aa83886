// Statevector simulation of the {H, RX, RZ, RZZ} gate set.
//
// Qubit 0 is the least-significant bit of a basis-state index. Expectation
// values are exact unless a shot count is requested.
#pragma once

#include <array>
#include <atomic>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spsb/rng.hpp"

namespace spsb::qsim {

using Amplitude = std::complex<double>;

inline constexpr int kMaxQubits = 24;

class StateVector {
 public:
  // |0...0> on n_qubits; throws ConfigError outside [1, kMaxQubits].
  explicit StateVector(int n_qubits);

  int n_qubits() const { return n_qubits_; }
  std::size_t dim() const { return amplitudes_.size(); }
  std::span<const Amplitude> amplitudes() const { return amplitudes_; }
  std::span<Amplitude> amplitudes() { return amplitudes_; }
  double norm_squared() const;

 private:
  int n_qubits_;
  std::vector<Amplitude> amplitudes_;
};

StateVector new_state(int n_qubits);

enum class GateKind { H, RX, RZ, RZZ };

// Where a gate's angle comes from.
enum class SlotKind { Fixed, Trainable, Input };

struct Gate {
  GateKind kind = GateKind::H;
  std::array<int, 2> qubits{0, -1};  // second entry is -1 for 1-qubit gates
  SlotKind slot = SlotKind::Fixed;
  std::size_t slot_index = 0;
  double angle = 0.0;  // only meaningful for SlotKind::Fixed

  static Gate h(int q);
  static Gate rx(int q, SlotKind slot, std::size_t index);
  static Gate rz(int q, SlotKind slot, std::size_t index);
  static Gate rzz(int q0, int q1, SlotKind slot, std::size_t index);
  static Gate fixed(GateKind kind, std::array<int, 2> qubits, double angle);

  int arity() const { return kind == GateKind::RZZ ? 2 : 1; }
  bool parametric() const { return kind != GateKind::H; }
};

std::string to_string(GateKind kind);

// Applies gate in place. Parametric gates need an angle: either bound_angle or
// the gate's own fixed angle. Throws InvariantError otherwise.
void apply_gate(StateVector& state, const Gate& gate,
                std::optional<double> bound_angle = std::nullopt);

// <Z_qubit>, exact.
double expectation_z(const StateVector& state, int qubit);

// <Z_q> for every qubit, exact.
std::vector<double> all_expectations_z(const StateVector& state);

// Estimates every <Z_q> from `shots` sampled bitstrings.
std::vector<double> sampled_expectations_z(const StateVector& state, int shots,
                                           Rng& rng);

class Circuit {
 public:
  // Validates qubit indices and slot coverage; throws InvariantError.
  Circuit(int n_qubits, std::vector<Gate> gates, std::size_t n_trainable,
          std::size_t n_inputs);

  int n_qubits() const { return n_qubits_; }
  std::size_t n_trainable() const { return n_trainable_; }
  std::size_t n_inputs() const { return n_inputs_; }
  std::span<const Gate> gates() const { return gates_; }

  // Angle of `gate` after binding; nullopt for H.
  std::optional<double> bound_angle(const Gate& gate,
                                    std::span<const double> params,
                                    std::span<const double> inputs) const;

 private:
  int n_qubits_;
  std::vector<Gate> gates_;
  std::size_t n_trainable_;
  std::size_t n_inputs_;
};

inline constexpr double kIqpEntanglerAngle = 0.78539816339744830962;  // pi/4

// RX(x_q) encoding on each qubit, then n_layers of
// [H on all, RZ(theta) on each qubit, RZZ(pi/4) on each (q, q+1)].
Circuit build_iqp_circuit(int n_qubits, int n_layers);

// Counts full circuit executions. Safe to bump from several threads.
class EvalCounter {
 public:
  void add(std::uint64_t n = 1) { total_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t total() const { return total_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> total_{0};
};

EvalCounter& global_eval_counter();

struct RunOptions {
  EvalCounter* counter = nullptr;  // nullptr -> global_eval_counter()
  int shots = 0;                   // 0 -> exact expectations
  Rng* shot_rng = nullptr;         // required when shots > 0
};

// Final state of the circuit. Leading single-qubit gates are applied as a
// product state and runs of diagonal gates are fused into one phase pass.
StateVector simulate(const Circuit& circuit, std::span<const double> params,
                     std::span<const double> inputs);

// Same state, one apply_gate call per gate. Reference path for tests.
StateVector simulate_gatewise(const Circuit& circuit, std::span<const double> params,
                              std::span<const double> inputs);

// One <Z_q> per qubit. Counts exactly one circuit evaluation.
std::vector<double> run_circuit(const Circuit& circuit,
                                std::span<const double> params,
                                std::span<const double> inputs,
                                const RunOptions& options = {});

}  // namespace spsb::qsim
