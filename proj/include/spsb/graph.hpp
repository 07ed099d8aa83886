// Define-by-run reverse-mode differentiation.
//
// A Tape records every operation of one forward pass. backward() walks the
// records in reverse, turning the upstream vector of each node into upstream
// vectors for its inputs, and returns the accumulated gradient of every
// Parameter reached. Quantum circuit nodes take their local Jacobian from a
// configurable differentiator.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "spsb/diff.hpp"
#include "spsb/qsim.hpp"
#include "spsb/rng.hpp"

namespace spsb::graph {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  // Throws InvariantError when values.size() != product(shape).
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value) { return vector({value}); }
  static Tensor zeros(Shape shape);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  bool requires_grad() const { return requires_grad_; }

 private:
  Shape shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
};

// A trainable tensor that outlives individual tapes.
class Parameter {
 public:
  Parameter(std::string name, Tensor init);

  const std::string& name() const { return name_; }
  const Tensor& value() const { return value_; }
  std::span<double> values() { return value_.values(); }
  std::size_t size() const { return value_.size(); }

 private:
  std::string name_;
  Tensor value_;
};

// Gradient buffers keyed by parameter. Values are flat, in parameter order.
class Gradients {
 public:
  void accumulate(const Parameter& p, std::span<const double> grad);
  bool contains(const Parameter& p) const { return grads_.contains(&p); }
  // Zeros of the right size when the parameter received no gradient.
  std::vector<double> of(const Parameter& p) const;

 private:
  std::unordered_map<const Parameter*, std::vector<double>> grads_;
};

struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  // Receives the node's upstream vector and one buffer per input. Buffers of
  // inputs that need no gradient are empty and must be left alone.
  using Backward =
      std::function<void(std::span<const double> upstream, std::span<std::vector<double>> input_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Tensor value);
  Var parameter(const Parameter& p);

  Var record(std::string_view op, std::vector<Var> inputs, Tensor output, Backward backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  // Number of recorded operations (leaves excluded).
  std::size_t size() const { return nodes_.size(); }
  std::string_view op_name(std::size_t node) const { return nodes_[node].op; }

  // Seeds `output` with ones and propagates. Callable once per tape.
  Gradients backward(Var output);

 private:
  struct Slot {
    Tensor value;
    const Parameter* parameter = nullptr;
    bool requires_grad = false;
    std::ptrdiff_t producer = -1;  // node index, -1 for leaves
  };
  struct Node {
    std::string op;
    std::vector<Var> inputs;
    Var output;
    Backward backward;
  };

  const Slot& slot(Var v) const;

  std::vector<Slot> slots_;
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Classical operations. Rank-1 inputs are single samples; dense and the
// losses also take rank-2 [batch, features] inputs.
Var identity(Tape& tape, Var x);
Var dense(Tape& tape, Var x, Var weight, Var bias);  // weight [out, in], bias [out]
Var sigmoid(Tape& tape, Var x);
Var softmax(Tape& tape, Var x);  // over the last axis
Var concat(Tape& tape, std::span<const Var> parts);  // flattens, rank-1 result
Var select(Tape& tape, Var x, std::size_t index);
Var affine(Tape& tape, Var x, double scale, double shift);  // scale*x + shift

inline constexpr double kProbabilityClip = 1e-7;

// Mean binary cross entropy; labels must be 0 or 1 (DataError otherwise).
Var bce_loss(Tape& tape, Var p, Var labels);
// Mean over rows of -sum_k y_k ln q_k; labels must be one-hot (DataError).
Var cross_entropy(Tape& tape, Var q, Var labels);

// A circuit used as a graph node. Inputs are data: they never get gradients.
struct QuantumLayer {
  qsim::Circuit circuit;
  diff::DiffConfig differentiator;
  qsim::EvalCounter* counter = nullptr;
  int shots = 0;
};

// Runs the circuit once now. The backward pass asks the differentiator for
// the local Jacobian, drawing any randomness from `stream`. `layer` must
// outlive the tape.
Var quantum(Tape& tape, const QuantumLayer& layer, Var params, Var features, Rng stream);

}  // namespace spsb::graph
