#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "spsb/diff.hpp"
#include "spsb/optim.hpp"

namespace spsb::tasks {

enum class Task { RandomA, RandomB, Quanv };

std::string to_string(Task task);
Task parse_task(std::string_view name);

struct ExperimentConfig {
  Task task = Task::RandomA;
  int n_qubits = 5;
  int n_layers = 3;
  std::size_t batch_size = 25;
  double learning_rate = 0.01;
  optim::Kind optimizer = optim::Kind::Adam;
  int epochs = 1;
  std::uint64_t seed = 1;
  diff::Method differentiator = diff::Method::Spsb;
  double epsilon = 0.01;
  int spsb_samples = 1;
  int n_runs = 1;
  int shots = 0;
  bool deterministic = false;
  int threads = 0;  // 0 -> hardware concurrency; ignored when deterministic
  std::size_t n_points = 100;
  std::string images;
  std::string labels;
  std::size_t image_count = 1000;

  diff::DiffConfig diff_config() const;
  // Circuits evaluated per sample forward pass.
  std::size_t windows_per_sample() const { return task == Task::Quanv ? 4 : 1; }
};

// Throws ConfigError naming the offending key.
void validate(const ExperimentConfig& config);

// Flat key/value view; keys are the field names above.
std::map<std::string, std::string> to_key_values(const ExperimentConfig& config);
// Applies entries on top of `base`; unknown keys or bad values -> ConfigError.
ExperimentConfig apply_key_values(ExperimentConfig base,
                                  const std::map<std::string, std::string>& entries);

// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace spsb::tasks
