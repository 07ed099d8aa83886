#include "spsb/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "spsb/error.hpp"
#include "spsb/optim.hpp"
#include "spsb/rng.hpp"

namespace spsb::tasks {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5b0f;
constexpr std::uint64_t kSampleStream = 0x5a3e;

struct SampleResult {
  double loss = 0.0;
  bool correct = false;
  graph::Gradients grads;
};

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < n; i += threads) fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

unsigned worker_count(const ExperimentConfig& config) {
  if (config.deterministic) return 1;
  if (config.threads > 0) return static_cast<unsigned>(config.threads);
  return std::max(1U, std::thread::hardware_concurrency());
}

}  // namespace

std::uint64_t evals_per_step(const ExperimentConfig& config, std::size_t n_trainable) {
  const std::uint64_t per_application =
      1 + diff::evals_per_jacobian(config.diff_config(), n_trainable);
  return config.batch_size * config.windows_per_sample() * per_application;
}

RunHistory train(Model& model, const Dataset& data, const ExperimentConfig& config,
                 qsim::EvalCounter& counter) {
  validate(config);
  if (model.n_features() != data.n_features) {
    throw ConfigError("model reads " + std::to_string(model.n_features()) +
                      " features but the dataset has " + std::to_string(data.n_features));
  }
  if (config.batch_size > data.size()) {
    throw ConfigError("config key 'batch_size': " + std::to_string(config.batch_size) +
                      " exceeds the dataset size " + std::to_string(data.size()));
  }

  RunHistory history{config, config.seed, {}};
  auto params = model.parameters();
  optim::Optimizer optimizer(config.optimizer, config.learning_rate, params);
  const unsigned threads = worker_count(config);
  const std::size_t batches_per_epoch = data.size() / config.batch_size;

  std::vector<std::size_t> order(data.size());
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = make_stream(config.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle() % i]);

    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      ++step;
      const std::span<const std::size_t> batch(order.data() + b * config.batch_size,
                                               config.batch_size);
      std::vector<SampleResult> results(batch.size());
      parallel_for(batch.size(), threads, [&](std::size_t k) {
        const std::size_t i = batch[k];
        graph::Tape tape;
        const auto out = model.forward(tape, data.row(i), data.labels[i],
                                       derive_seed(config.seed, {kSampleStream, step, k}));
        results[k].loss = tape.value(out.loss)[0];
        results[k].correct = out.prediction == data.labels[i];
        results[k].grads = tape.backward(out.loss);
      });

      // Fixed summation order keeps threaded runs bit-identical to
      // sequential ones.
      double loss = 0.0;
      std::size_t correct = 0;
      graph::Gradients mean;
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (const auto* p : params) {
        std::vector<double> g(p->size(), 0.0);
        for (const auto& r : results) {
          const auto gi = r.grads.of(*p);
          for (std::size_t j = 0; j < g.size(); ++j) g[j] += gi[j];
        }
        for (double& v : g) v *= scale;
        mean.accumulate(*p, g);
      }
      for (const auto& r : results) {
        loss += r.loss;
        correct += r.correct ? 1 : 0;
      }
      loss *= scale;
      const StepRecord record{step, counter.total(), loss,
                              static_cast<double>(correct) * scale};
      if (!std::isfinite(loss)) {
        history.records.push_back(record);
        throw TrainingAborted("non-finite loss at step " + std::to_string(step) + " (epoch " +
                                  std::to_string(epoch) + ", " +
                                  std::to_string(record.circuit_evals) + " circuit evaluations)",
                              history);
      }
      history.records.push_back(record);
      optimizer.step(mean);
    }
  }
  return history;
}

Evaluation evaluate(const Model& model, const Dataset& data) {
  if (data.size() == 0) throw DataError("cannot evaluate on an empty dataset");
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    graph::Tape tape;
    const auto out = model.forward(tape, data.row(i), data.labels[i], derive_seed(0, {i}));
    loss += tape.value(out.loss)[0];
    correct += out.prediction == data.labels[i] ? 1 : 0;
  }
  const double n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(correct) / n};
}

Dataset make_dataset(const ExperimentConfig& config) {
  if (config.task == Task::Quanv) {
    PooledImageOptions opts;
    opts.count = config.image_count;
    return load_pooled_images(config.images, config.labels, opts);
  }
  return gen_random_dataset(config.n_points, static_cast<std::size_t>(config.n_qubits),
                            config.seed);
}

RunHistory run_experiment(const ExperimentConfig& config) {
  validate(config);
  qsim::EvalCounter counter;
  auto model = build_model(config, config.seed, &counter);
  const Dataset data = make_dataset(config);
  return train(*model, data, config, counter);
}

namespace {

std::string format_17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_history_csv(std::ostream& out, std::span<const RunHistory> histories) {
  out << kCsvHeader << '\n';
  for (const auto& h : histories) {
    const std::string tail = "," + diff::to_string(h.config.differentiator) + "," +
                             to_string(h.config.task) + "," +
                             format_double(h.config.learning_rate) + "," +
                             std::to_string(h.seed) + "\n";
    for (const auto& r : h.records) {
      out << r.step << ',' << r.circuit_evals << ',' << format_17(r.loss) << ','
          << format_17(r.accuracy) << tail;
    }
  }
}

void write_history_csv(const std::filesystem::path& path, std::span<const RunHistory> histories) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_history_csv(out, histories);
}

std::vector<RunHistory> read_history_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw DataError(source + ": missing or unexpected CSV header");
  }
  std::vector<RunHistory> out;
  std::vector<std::string> keys;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) {
      throw DataError(source + " line " + std::to_string(line_no) + ": expected 8 columns");
    }
    StepRecord r;
    ExperimentConfig c;
    try {
      r.step = std::stoull(cells[0]);
      r.circuit_evals = std::stoull(cells[1]);
      r.loss = std::stod(cells[2]);
      r.accuracy = std::stod(cells[3]);
      c.differentiator = diff::parse_method(cells[4]);
      c.task = parse_task(cells[5]);
      c.learning_rate = std::stod(cells[6]);
      c.seed = std::stoull(cells[7]);
    } catch (const std::exception& e) {
      throw DataError(source + " line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string key = cells[4] + "," + cells[5] + "," + cells[6] + "," + cells[7];
    auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) {
      keys.push_back(key);
      out.push_back(RunHistory{c, c.seed, {}});
      it = keys.end() - 1;
    }
    out[static_cast<std::size_t>(it - keys.begin())].records.push_back(r);
  }
  if (out.empty()) throw DataError(source + ": CSV has no data rows");
  return out;
}

std::vector<RunHistory> read_history_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_history_csv(in, path.string());
}

}  // namespace spsb::tasks
