#include "spsb/models.hpp"

#include <cmath>

#include "spsb/error.hpp"
#include "spsb/rng.hpp"

namespace spsb::tasks {

using graph::Parameter;
using graph::Tape;
using graph::Tensor;
using graph::Var;

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

namespace {

Tensor uniform_tensor(graph::Shape shape, double bound, Rng& rng) {
  std::vector<double> v(graph::element_count(shape));
  for (double& x : v) x = uniform(rng, -bound, bound);
  return Tensor(std::move(shape), std::move(v));
}

graph::QuantumLayer make_layer(const ExperimentConfig& c, qsim::EvalCounter* counter) {
  return graph::QuantumLayer{qsim::build_iqp_circuit(c.n_qubits, c.n_layers), c.diff_config(),
                             counter, c.shots};
}

Var binary_label(Tape& tape, int label) {
  return tape.constant(Tensor::scalar(static_cast<double>(label)));
}

class RandomA final : public Model {
 public:
  RandomA(const ExperimentConfig& c, Rng& rng, qsim::EvalCounter* counter)
      : layer_(make_layer(c, counter)),
        theta_("theta", uniform_tensor({layer_.circuit.n_trainable()}, 0.1, rng)) {}

  std::vector<Parameter*> parameters() override { return {&theta_}; }
  std::size_t circuit_parameter_count() const override { return theta_.size(); }
  std::size_t classical_parameter_count() const override { return 0; }
  std::size_t windows_per_sample() const override { return 1; }
  std::size_t n_features() const override { return layer_.circuit.n_inputs(); }

  SampleOutput forward(Tape& tape, std::span<const double> features, int label,
                       std::uint64_t stream_seed) const override {
    const Var x = tape.constant(Tensor::vector({features.begin(), features.end()}));
    const Var z = graph::quantum(tape, layer_, tape.parameter(theta_), x,
                                 make_stream(stream_seed, {0}));
    const Var p = graph::affine(tape, graph::select(tape, z, 0), -0.5, 0.5);
    const Var loss = graph::bce_loss(tape, p, binary_label(tape, label));
    return {loss, tape.value(p)[0] > 0.5 ? 1 : 0};
  }

 private:
  graph::QuantumLayer layer_;
  Parameter theta_;
};

class RandomB final : public Model {
 public:
  RandomB(const ExperimentConfig& c, Rng& rng, qsim::EvalCounter* counter)
      : layer_(make_layer(c, counter)),
        theta_("theta", uniform_tensor({layer_.circuit.n_trainable()}, 0.1, rng)),
        weight_("dense.weight",
                uniform_tensor({1, static_cast<std::size_t>(c.n_qubits)},
                               1.0 / std::sqrt(static_cast<double>(c.n_qubits)), rng)),
        bias_("dense.bias", Tensor::zeros({1})) {}

  std::vector<Parameter*> parameters() override { return {&theta_, &weight_, &bias_}; }
  std::size_t circuit_parameter_count() const override { return theta_.size(); }
  std::size_t classical_parameter_count() const override { return weight_.size() + bias_.size(); }
  std::size_t windows_per_sample() const override { return 1; }
  std::size_t n_features() const override { return layer_.circuit.n_inputs(); }

  SampleOutput forward(Tape& tape, std::span<const double> features, int label,
                       std::uint64_t stream_seed) const override {
    const Var x = tape.constant(Tensor::vector({features.begin(), features.end()}));
    const Var z = graph::quantum(tape, layer_, tape.parameter(theta_), x,
                                 make_stream(stream_seed, {0}));
    const Var logit = graph::dense(tape, z, tape.parameter(weight_), tape.parameter(bias_));
    const Var p = graph::sigmoid(tape, logit);
    const Var loss = graph::bce_loss(tape, p, binary_label(tape, label));
    return {loss, tape.value(p)[0] > 0.5 ? 1 : 0};
  }

 private:
  graph::QuantumLayer layer_;
  Parameter theta_;
  Parameter weight_;
  Parameter bias_;
};

class Quanv final : public Model {
 public:
  static constexpr std::size_t kSide = 4;
  static constexpr std::size_t kWindow = 2;
  static constexpr std::size_t kWindows = (kSide / kWindow) * (kSide / kWindow);
  static constexpr std::size_t kClasses = 2;

  Quanv(const ExperimentConfig& c, Rng& rng, qsim::EvalCounter* counter)
      : layer_(make_layer(c, counter)),
        theta_("kernel.theta", uniform_tensor({layer_.circuit.n_trainable()}, 0.1, rng)),
        weight_("dense.weight", uniform_tensor({kClasses, kWindows * kWindow * kWindow},
                                               1.0 / std::sqrt(16.0), rng)),
        bias_("dense.bias", Tensor::zeros({kClasses})) {}

  std::vector<Parameter*> parameters() override { return {&theta_, &weight_, &bias_}; }
  std::size_t circuit_parameter_count() const override { return theta_.size(); }
  std::size_t classical_parameter_count() const override { return weight_.size() + bias_.size(); }
  std::size_t windows_per_sample() const override { return kWindows; }
  std::size_t n_features() const override { return kSide * kSide; }

  SampleOutput forward(Tape& tape, std::span<const double> features, int label,
                       std::uint64_t stream_seed) const override {
    if (features.size() != kSide * kSide) {
      throw InvariantError("quanv expects 16 pooled pixels, got " + std::to_string(features.size()));
    }
    if (label < 0 || label >= static_cast<int>(kClasses)) {
      throw DataError("quanv label " + std::to_string(label) + " outside {0, 1}");
    }
    const Var theta = tape.parameter(theta_);
    std::vector<Var> outputs;
    std::size_t k = 0;
    for (std::size_t wr = 0; wr < kSide; wr += kWindow) {
      for (std::size_t wc = 0; wc < kSide; wc += kWindow, ++k) {
        std::vector<double> window;
        for (std::size_t r = wr; r < wr + kWindow; ++r) {
          for (std::size_t c = wc; c < wc + kWindow; ++c) window.push_back(features[r * kSide + c]);
        }
        const Var x = tape.constant(Tensor::vector(std::move(window)));
        outputs.push_back(graph::quantum(tape, layer_, theta, x, make_stream(stream_seed, {k})));
      }
    }
    const Var h = graph::concat(tape, outputs);
    const Var logits = graph::dense(tape, h, tape.parameter(weight_), tape.parameter(bias_));
    const Var q = graph::softmax(tape, logits);
    std::vector<double> onehot(kClasses, 0.0);
    onehot[static_cast<std::size_t>(label)] = 1.0;
    const Var loss = graph::cross_entropy(tape, q, tape.constant(Tensor::vector(onehot)));
    return {loss, static_cast<int>(argmax(tape.value(q).values()))};
  }

 private:
  graph::QuantumLayer layer_;
  Parameter theta_;
  Parameter weight_;
  Parameter bias_;
};

}  // namespace

std::unique_ptr<Model> build_model(const ExperimentConfig& config, std::uint64_t init_seed,
                                   qsim::EvalCounter* counter) {
  diff::validate(config.diff_config());
  if (config.task == Task::Quanv && config.n_qubits != 4) {
    throw ConfigError("quanv model needs 4 qubits for a 2x2 window, got " +
                      std::to_string(config.n_qubits));
  }
  Rng rng = make_stream(init_seed, {0x1417});
  switch (config.task) {
    case Task::RandomA: return std::make_unique<RandomA>(config, rng, counter);
    case Task::RandomB: return std::make_unique<RandomB>(config, rng, counter);
    case Task::Quanv: return std::make_unique<Quanv>(config, rng, counter);
  }
  throw InvariantError("unhandled task");
}

}  // namespace spsb::tasks
