#include "spsb/experiment.hpp"

#include <charconv>
#include <cmath>
#include <functional>

#include "spsb/error.hpp"

namespace spsb::tasks {

std::string to_string(Task task) {
  switch (task) {
    case Task::RandomA: return "random-a";
    case Task::RandomB: return "random-b";
    case Task::Quanv: return "quanv";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  if (name == "random-a") return Task::RandomA;
  if (name == "random-b") return Task::RandomB;
  if (name == "quanv") return Task::Quanv;
  throw ConfigError("unknown task '" + std::string(name) +
                    "' (expected random-a, random-b or quanv)");
}

diff::DiffConfig ExperimentConfig::diff_config() const {
  return diff::DiffConfig{differentiator, epsilon, spsb_samples, 1e-5};
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("config key '" + key + "': " + why);
  };
  if (c.n_qubits < 1 || c.n_qubits > qsim::kMaxQubits) fail("n_qubits", "must be in [1, 24]");
  if (c.task == Task::Quanv && c.n_qubits != 4) {
    fail("n_qubits", "the quanvolutional kernel reads 2x2 windows, so it needs exactly 4 qubits");
  }
  if (c.n_layers < 1) fail("n_layers", "must be at least 1");
  if (c.batch_size < 1) fail("batch_size", "must be at least 1");
  if (!std::isfinite(c.learning_rate) || c.learning_rate < 0) fail("learning_rate", "must be >= 0");
  if (c.epochs < 1) fail("epochs", "must be at least 1");
  if (!(c.epsilon > 0) || !std::isfinite(c.epsilon)) fail("epsilon", "must be positive");
  if (c.spsb_samples < 1) fail("spsb_samples", "must be at least 1");
  if (c.n_runs < 1) fail("n_runs", "must be at least 1");
  if (c.shots < 0) fail("shots", "must be >= 0");
  if (c.threads < 0) fail("threads", "must be >= 0");
  if (c.task != Task::Quanv) {
    if (c.n_points < 1) fail("n_points", "must be at least 1");
    if (c.batch_size > c.n_points) {
      fail("batch_size", std::to_string(c.batch_size) + " exceeds the dataset size " +
                             std::to_string(c.n_points));
    }
  } else {
    if (c.images.empty() || c.labels.empty()) fail("images", "quanv needs image and label files");
    if (c.batch_size > c.image_count) {
      fail("batch_size", std::to_string(c.batch_size) + " exceeds the dataset size " +
                             std::to_string(c.image_count));
    }
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::map<std::string, std::string> to_key_values(const ExperimentConfig& c) {
  return {
      {"task", to_string(c.task)},
      {"n_qubits", std::to_string(c.n_qubits)},
      {"n_layers", std::to_string(c.n_layers)},
      {"batch_size", std::to_string(c.batch_size)},
      {"learning_rate", format_double(c.learning_rate)},
      {"optimizer", optim::to_string(c.optimizer)},
      {"epochs", std::to_string(c.epochs)},
      {"seed", std::to_string(c.seed)},
      {"differentiator", diff::to_string(c.differentiator)},
      {"epsilon", format_double(c.epsilon)},
      {"spsb_samples", std::to_string(c.spsb_samples)},
      {"n_runs", std::to_string(c.n_runs)},
      {"shots", std::to_string(c.shots)},
      {"deterministic", c.deterministic ? "true" : "false"},
      {"threads", std::to_string(c.threads)},
      {"n_points", std::to_string(c.n_points)},
      {"images", c.images},
      {"labels", c.labels},
      {"image_count", std::to_string(c.image_count)},
  };
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

}  // namespace

ExperimentConfig apply_key_values(ExperimentConfig c,
                                  const std::map<std::string, std::string>& entries) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter, std::less<>> setters{
      {"task", [&](auto&, auto& v) { c.task = parse_task(v); }},
      {"n_qubits", [&](auto& k, auto& v) { c.n_qubits = parse_number<int>(k, v); }},
      {"n_layers", [&](auto& k, auto& v) { c.n_layers = parse_number<int>(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { c.batch_size = parse_number<std::size_t>(k, v); }},
      {"learning_rate", [&](auto& k, auto& v) { c.learning_rate = parse_number<double>(k, v); }},
      {"optimizer", [&](auto&, auto& v) { c.optimizer = optim::parse_kind(v); }},
      {"epochs", [&](auto& k, auto& v) { c.epochs = parse_number<int>(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"differentiator", [&](auto&, auto& v) { c.differentiator = diff::parse_method(v); }},
      {"epsilon", [&](auto& k, auto& v) { c.epsilon = parse_number<double>(k, v); }},
      {"spsb_samples", [&](auto& k, auto& v) { c.spsb_samples = parse_number<int>(k, v); }},
      {"n_runs", [&](auto& k, auto& v) { c.n_runs = parse_number<int>(k, v); }},
      {"shots", [&](auto& k, auto& v) { c.shots = parse_number<int>(k, v); }},
      {"deterministic", [&](auto& k, auto& v) { c.deterministic = parse_bool(k, v); }},
      {"threads", [&](auto& k, auto& v) { c.threads = parse_number<int>(k, v); }},
      {"n_points", [&](auto& k, auto& v) { c.n_points = parse_number<std::size_t>(k, v); }},
      {"images", [&](auto&, auto& v) { c.images = v; }},
      {"labels", [&](auto&, auto& v) { c.labels = v; }},
      {"image_count", [&](auto& k, auto& v) { c.image_count = parse_number<std::size_t>(k, v); }},
  };
  for (const auto& [key, value] : entries) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  return c;
}

}  // namespace spsb::tasks
