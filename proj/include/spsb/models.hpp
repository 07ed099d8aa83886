// The three hybrid models:
//   random-a  IQP circuit -> <Z_0> -> p = (1 - <Z_0>)/2 -> BCE
//   random-b  IQP circuit -> all <Z_q> -> dense(n_q -> 1) -> sigmoid -> BCE
//   quanv     4x4 image -> four 2x2 windows (stride 2) -> shared 4-qubit IQP
//             kernel -> 16 expectations -> dense(16 -> 2) -> softmax -> CE
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "spsb/experiment.hpp"
#include "spsb/graph.hpp"

namespace spsb::tasks {

struct SampleOutput {
  graph::Var loss;
  int prediction = 0;
};

class Model {
 public:
  virtual ~Model() = default;

  virtual std::vector<graph::Parameter*> parameters() = 0;
  virtual std::size_t circuit_parameter_count() const = 0;
  virtual std::size_t classical_parameter_count() const = 0;
  virtual std::size_t windows_per_sample() const = 0;
  virtual std::size_t n_features() const = 0;

  // Records one sample on `tape`. Circuit application k draws its randomness
  // from derive_seed(stream_seed, {k}). Safe to call concurrently on
  // separate tapes.
  virtual SampleOutput forward(graph::Tape& tape, std::span<const double> features, int label,
                               std::uint64_t stream_seed) const = 0;
};

// Initialises parameters from `init_seed`: circuit angles ~ U(-0.1, 0.1),
// dense weights ~ U(+-1/sqrt(fan_in)), biases zero. Circuit evaluations are
// counted on `counter`.
std::unique_ptr<Model> build_model(const ExperimentConfig& config, std::uint64_t init_seed,
                                   qsim::EvalCounter* counter);

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace spsb::tasks
