#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "spsb/dataset.hpp"
#include "spsb/error.hpp"
#include "spsb/experiment.hpp"
#include "spsb/models.hpp"

namespace spsb::tasks {

struct StepRecord {
  std::size_t step = 0;
  std::uint64_t circuit_evals = 0;  // cumulative, this run only
  double loss = 0.0;                // mean over the batch
  double accuracy = 0.0;            // fraction of the batch classified correctly

  bool operator==(const StepRecord&) const = default;
};

struct RunHistory {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::vector<StepRecord> records;
};

// Thrown when a batch loss is not finite; carries the records so far plus the
// offending step.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, RunHistory partial)
      : NumericalError(what), partial_(std::move(partial)) {}
  const RunHistory& partial() const { return partial_; }

 private:
  RunHistory partial_;
};

// Circuit evaluations one optimizer step costs for this configuration.
std::uint64_t evals_per_step(const ExperimentConfig& config, std::size_t n_trainable);

// Mini-batch training: each epoch shuffles the data and splits it into full
// batches (a short tail is dropped). Per step: forward and backward every
// sample, average the gradients, take one optimizer step, record.
// Parameters are initialised from config.seed. `counter` must start at zero
// if the recorded counts are to be per-run.
RunHistory train(Model& model, const Dataset& data, const ExperimentConfig& config,
                 qsim::EvalCounter& counter);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Mean loss and accuracy over the whole dataset with the current parameters.
// Forward passes only; they are counted on the model's counter.
Evaluation evaluate(const Model& model, const Dataset& data);

// Builds the dataset for config.task: random data seeded with config.seed, or
// pooled images from config.images / config.labels.
Dataset make_dataset(const ExperimentConfig& config);

// build_model + make_dataset + train with a fresh counter.
RunHistory run_experiment(const ExperimentConfig& config);

inline constexpr const char* kCsvHeader = "step,circuit_evals,loss,accuracy,method,task,lr,seed";

// Header line followed by one row per record of every history.
void write_history_csv(std::ostream& out, std::span<const RunHistory> histories);
void write_history_csv(const std::filesystem::path& path, std::span<const RunHistory> histories);

// Splits rows back into histories, one per (method, task, lr, seed) group in
// order of first appearance. Throws DataError on malformed or empty input.
std::vector<RunHistory> read_history_csv(std::istream& in, const std::string& source = "<stream>");
std::vector<RunHistory> read_history_csv(const std::filesystem::path& path);

}  // namespace spsb::tasks
