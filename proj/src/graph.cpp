#include "spsb/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spsb/error.hpp"

namespace spsb::graph {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : shape_(std::move(shape)), values_(std::move(values)), requires_grad_(requires_grad) {
  if (element_count(shape_) != values_.size()) {
    throw InvariantError("tensor of shape " + graph::to_string(shape_) + " given " +
                         std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Parameter::Parameter(std::string name, Tensor init)
    : name_(std::move(name)),
      value_(init.shape(), std::vector<double>(init.values().begin(), init.values().end()), true) {}

void Gradients::accumulate(const Parameter& p, std::span<const double> grad) {
  if (grad.size() != p.size()) {
    throw InvariantError("gradient for '" + p.name() + "' has " + std::to_string(grad.size()) +
                         " entries, parameter has " + std::to_string(p.size()));
  }
  auto [it, inserted] = grads_.try_emplace(&p, grad.begin(), grad.end());
  if (!inserted) {
    for (std::size_t i = 0; i < grad.size(); ++i) it->second[i] += grad[i];
  }
}

std::vector<double> Gradients::of(const Parameter& p) const {
  if (auto it = grads_.find(&p); it != grads_.end()) return it->second;
  return std::vector<double>(p.size(), 0.0);
}

Var Tape::constant(Tensor value) {
  slots_.push_back(Slot{std::move(value), nullptr, false, -1});
  return Var{slots_.size() - 1};
}

Var Tape::parameter(const Parameter& p) {
  slots_.push_back(Slot{p.value(), &p, true, -1});
  return Var{slots_.size() - 1};
}

const Tape::Slot& Tape::slot(Var v) const {
  if (v.id >= slots_.size()) {
    throw InvariantError("variable " + std::to_string(v.id) + " does not belong to this tape");
  }
  return slots_[v.id];
}

Var Tape::record(std::string_view op, std::vector<Var> inputs, Tensor output, Backward backward) {
  if (consumed_) throw UsageError("cannot record '" + std::string(op) + "' after backward");
  bool needs_grad = false;
  for (Var in : inputs) needs_grad = needs_grad || slot(in).requires_grad;
  slots_.push_back(Slot{std::move(output), nullptr, needs_grad,
                        static_cast<std::ptrdiff_t>(nodes_.size())});
  const Var out{slots_.size() - 1};
  nodes_.push_back(Node{std::string(op), std::move(inputs), out, std::move(backward)});
  return out;
}

const Tensor& Tape::value(Var v) const { return slot(v).value; }

bool Tape::requires_grad(Var v) const { return slot(v).requires_grad; }

Gradients Tape::backward(Var output) {
  if (consumed_) throw UsageError("backward already ran on this tape");
  consumed_ = true;

  std::vector<std::vector<double>> upstream(slots_.size());
  upstream[output.id].assign(slot(output).value.size(), 1.0);

  for (auto node = nodes_.rbegin(); node != nodes_.rend(); ++node) {
    const auto& up = upstream[node->output.id];
    if (up.empty() || !slots_[node->output.id].requires_grad) continue;
    std::vector<std::vector<double>> input_grads(node->inputs.size());
    for (std::size_t k = 0; k < node->inputs.size(); ++k) {
      const Slot& in = slots_[node->inputs[k].id];
      if (in.requires_grad) input_grads[k].assign(in.value.size(), 0.0);
    }
    node->backward(up, input_grads);
    for (std::size_t k = 0; k < node->inputs.size(); ++k) {
      if (input_grads[k].empty()) continue;
      auto& acc = upstream[node->inputs[k].id];
      if (acc.empty()) {
        acc = std::move(input_grads[k]);
      } else {
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += input_grads[k][i];
      }
    }
  }

  Gradients grads;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (slots_[i].parameter && !upstream[i].empty()) grads.accumulate(*slots_[i].parameter, upstream[i]);
  }
  return grads;
}

namespace {

[[noreturn]] void shape_error(std::string_view op, const std::string& detail) {
  throw InvariantError(std::string(op) + ": " + detail);
}

// Rows and width of a rank-1 or rank-2 tensor.
std::pair<std::size_t, std::size_t> rows_cols(std::string_view op, const Tensor& t) {
  if (t.rank() == 1) return {1, t.shape()[0]};
  if (t.rank() == 2) return {t.shape()[0], t.shape()[1]};
  shape_error(op, "expected rank 1 or 2, got shape " + to_string(t.shape()));
}

double clip_probability(double p) {
  return std::clamp(p, kProbabilityClip, 1.0 - kProbabilityClip);
}

}  // namespace

Var identity(Tape& tape, Var x) {
  return tape.record("identity", {x}, tape.value(x),
                     [](std::span<const double> up, std::span<std::vector<double>> g) {
                       if (!g[0].empty()) std::copy(up.begin(), up.end(), g[0].begin());
                     });
}

Var dense(Tape& tape, Var x, Var weight, Var bias) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(weight);
  const Tensor& bv = tape.value(bias);
  if (wv.rank() != 2) shape_error("dense", "weight must be [out, in], got " + to_string(wv.shape()));
  const std::size_t n_out = wv.shape()[0];
  const std::size_t n_in = wv.shape()[1];
  const auto [batch, width] = rows_cols("dense", xv);
  if (width != n_in) {
    shape_error("dense", "input width " + std::to_string(width) + " does not match weight " +
                             to_string(wv.shape()));
  }
  if (bv.rank() != 1 || bv.size() != n_out) {
    shape_error("dense", "bias shape " + to_string(bv.shape()) + " does not match " +
                             std::to_string(n_out) + " outputs");
  }

  std::vector<double> out(batch * n_out);
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t o = 0; o < n_out; ++o) {
      double s = bv[o];
      for (std::size_t i = 0; i < n_in; ++i) s += wv[o * n_in + i] * xv[r * n_in + i];
      out[r * n_out + o] = s;
    }
  }
  Shape shape = xv.rank() == 1 ? Shape{n_out} : Shape{batch, n_out};

  std::vector<double> xs(xv.values().begin(), xv.values().end());
  std::vector<double> ws(wv.values().begin(), wv.values().end());
  auto backward = [xs = std::move(xs), ws = std::move(ws), batch, n_in, n_out](
                      std::span<const double> up, std::span<std::vector<double>> g) {
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t o = 0; o < n_out; ++o) {
        const double u = up[r * n_out + o];
        if (!g[2].empty()) g[2][o] += u;
        for (std::size_t i = 0; i < n_in; ++i) {
          if (!g[0].empty()) g[0][r * n_in + i] += u * ws[o * n_in + i];
          if (!g[1].empty()) g[1][o * n_in + i] += u * xs[r * n_in + i];
        }
      }
    }
  };
  return tape.record("dense", {x, weight, bias}, Tensor(std::move(shape), std::move(out)),
                     std::move(backward));
}

Var sigmoid(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  auto backward = [y](std::span<const double> up, std::span<std::vector<double>> g) {
    if (g[0].empty()) return;
    for (std::size_t i = 0; i < y.size(); ++i) g[0][i] += up[i] * y[i] * (1.0 - y[i]);
  };
  return tape.record("sigmoid", {x}, Tensor(xv.shape(), y), std::move(backward));
}

Var softmax(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  const auto [rows, width] = rows_cols("softmax", xv);
  std::vector<double> y(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = xv.values().subspan(r * width, width);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t k = 0; k < width; ++k) z += y[r * width + k] = std::exp(row[k] - m);
    for (std::size_t k = 0; k < width; ++k) y[r * width + k] /= z;
  }
  auto backward = [y, rows, width](std::span<const double> up, std::span<std::vector<double>> g) {
    if (g[0].empty()) return;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t k = 0; k < width; ++k) dot += up[r * width + k] * y[r * width + k];
      for (std::size_t k = 0; k < width; ++k) {
        g[0][r * width + k] += y[r * width + k] * (up[r * width + k] - dot);
      }
    }
  };
  return tape.record("softmax", {x}, Tensor(xv.shape(), y), std::move(backward));
}

Var concat(Tape& tape, std::span<const Var> parts) {
  if (parts.empty()) shape_error("concat", "no inputs");
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (Var p : parts) {
    offsets.push_back(out.size());
    const auto v = tape.value(p).values();
    out.insert(out.end(), v.begin(), v.end());
  }
  auto backward = [offsets](std::span<const double> up, std::span<std::vector<double>> g) {
    for (std::size_t k = 0; k < g.size(); ++k) {
      for (std::size_t i = 0; i < g[k].size(); ++i) g[k][i] += up[offsets[k] + i];
    }
  };
  return tape.record("concat", std::vector<Var>(parts.begin(), parts.end()),
                     Tensor::vector(std::move(out)), std::move(backward));
}

Var select(Tape& tape, Var x, std::size_t index) {
  const Tensor& xv = tape.value(x);
  if (index >= xv.size()) {
    shape_error("select", "index " + std::to_string(index) + " out of range for shape " +
                              to_string(xv.shape()));
  }
  auto backward = [index](std::span<const double> up, std::span<std::vector<double>> g) {
    if (!g[0].empty()) g[0][index] += up[0];
  };
  return tape.record("select", {x}, Tensor::scalar(xv[index]), std::move(backward));
}

Var affine(Tape& tape, Var x, double scale, double shift) {
  const Tensor& xv = tape.value(x);
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = scale * xv[i] + shift;
  auto backward = [scale](std::span<const double> up, std::span<std::vector<double>> g) {
    if (g[0].empty()) return;
    for (std::size_t i = 0; i < up.size(); ++i) g[0][i] += scale * up[i];
  };
  return tape.record("affine", {x}, Tensor(xv.shape(), y), std::move(backward));
}

Var bce_loss(Tape& tape, Var p, Var labels) {
  const Tensor& pv = tape.value(p);
  const Tensor& yv = tape.value(labels);
  if (pv.size() != yv.size() || pv.size() == 0) {
    shape_error("bce_loss", "prediction shape " + to_string(pv.shape()) +
                                " does not match label shape " + to_string(yv.shape()));
  }
  for (double y : yv.values()) {
    if (y != 0.0 && y != 1.0) {
      throw DataError("bce_loss: label " + std::to_string(y) + " is not 0 or 1");
    }
  }
  const double n = static_cast<double>(pv.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double q = clip_probability(pv[i]);
    loss -= yv[i] * std::log(q) + (1.0 - yv[i]) * std::log(1.0 - q);
  }
  loss /= n;
  std::vector<double> ps(pv.values().begin(), pv.values().end());
  std::vector<double> ys(yv.values().begin(), yv.values().end());
  auto backward = [ps = std::move(ps), ys = std::move(ys), n](std::span<const double> up,
                                                            std::span<std::vector<double>> g) {
    if (g[0].empty()) return;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      // Zero slope where the clip is active.
      if (ps[i] < kProbabilityClip || ps[i] > 1.0 - kProbabilityClip) continue;
      g[0][i] += up[0] * (-ys[i] / ps[i] + (1.0 - ys[i]) / (1.0 - ps[i])) / n;
    }
  };
  return tape.record("bce_loss", {p, labels}, Tensor::scalar(loss), std::move(backward));
}

Var cross_entropy(Tape& tape, Var q, Var labels) {
  const Tensor& qv = tape.value(q);
  const Tensor& yv = tape.value(labels);
  if (qv.shape() != yv.shape()) {
    shape_error("cross_entropy", "prediction shape " + to_string(qv.shape()) +
                                     " does not match label shape " + to_string(yv.shape()));
  }
  const auto [rows, width] = rows_cols("cross_entropy", qv);
  for (std::size_t r = 0; r < rows; ++r) {
    int ones = 0;
    for (std::size_t k = 0; k < width; ++k) {
      const double y = yv[r * width + k];
      if (y == 1.0) {
        ++ones;
      } else if (y != 0.0) {
        throw DataError("cross_entropy: row " + std::to_string(r) + " is not one-hot");
      }
    }
    if (ones != 1) throw DataError("cross_entropy: row " + std::to_string(r) + " is not one-hot");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < qv.size(); ++i) {
    if (yv[i] != 0.0) loss -= yv[i] * std::log(clip_probability(qv[i]));
  }
  loss /= static_cast<double>(rows);
  std::vector<double> qs(qv.values().begin(), qv.values().end());
  std::vector<double> ys(yv.values().begin(), yv.values().end());
  auto backward = [qs = std::move(qs), ys = std::move(ys), rows](std::span<const double> up,
                                                               std::span<std::vector<double>> g) {
    if (g[0].empty()) return;
    for (std::size_t i = 0; i < qs.size(); ++i) {
      if (ys[i] == 0.0 || qs[i] < kProbabilityClip || qs[i] > 1.0 - kProbabilityClip) continue;
      g[0][i] += -up[0] * ys[i] / qs[i] / static_cast<double>(rows);
    }
  };
  return tape.record("cross_entropy", {q, labels}, Tensor::scalar(loss), std::move(backward));
}

Var quantum(Tape& tape, const QuantumLayer& layer, Var params, Var features, Rng stream) {
  const Tensor& pv = tape.value(params);
  const Tensor& fv = tape.value(features);
  const qsim::Circuit& circuit = layer.circuit;
  if (pv.size() != circuit.n_trainable() || fv.size() != circuit.n_inputs()) {
    shape_error("quantum", "circuit expects " + std::to_string(circuit.n_trainable()) +
                               " parameters and " + std::to_string(circuit.n_inputs()) +
                               " features, got " + std::to_string(pv.size()) + " and " +
                               std::to_string(fv.size()));
  }
  auto rng = std::make_shared<Rng>(stream);
  const qsim::RunOptions options{layer.counter, layer.shots, rng.get()};
  auto expectations = qsim::run_circuit(circuit, pv.values(), fv.values(), options);

  std::vector<double> theta(pv.values().begin(), pv.values().end());
  std::vector<double> x(fv.values().begin(), fv.values().end());
  auto backward = [&layer, theta = std::move(theta), x = std::move(x), rng, options](
                      std::span<const double> up, std::span<std::vector<double>> g) {
    g[1].clear();  // features are data, even when a caller passes a Parameter
    if (g[0].empty()) return;
    const diff::Jacobian j =
        diff::jacobian(layer.differentiator, layer.circuit, theta, x, *rng, options);
    const auto grad = j.vjp(up);
    for (std::size_t i = 0; i < grad.size(); ++i) g[0][i] += grad[i];
  };
  return tape.record("quantum", {params, features}, Tensor::vector(std::move(expectations)),
                     std::move(backward));
}

}  // namespace spsb::graph
