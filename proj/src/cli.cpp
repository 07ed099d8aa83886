#include "spsb/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "spsb/aggregate.hpp"
#include "spsb/diff.hpp"
#include "spsb/error.hpp"
#include "spsb/plot.hpp"
#include "spsb/qsim.hpp"
#include "spsb/train.hpp"

#ifndef SPSB_DATA_DIR
#define SPSB_DATA_DIR "data"
#endif

namespace spsb::cli {

namespace fs = std::filesystem;
using tasks::ExperimentConfig;

std::map<std::string, std::string> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config file " + path.string());
  std::map<std::string, std::string> entries;
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + " line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    entries[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return entries;
}

void write_config_file(const fs::path& path, const ExperimentConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# spsb experiment snapshot\n";
  for (const auto& [key, value] : tasks::to_key_values(config)) out << key << " = " << value << '\n';
}

namespace {

// Flags that map one-to-one onto config keys.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> set;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  bool deterministic = false;
  CLI::Option* deterministic_flag = nullptr;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "key = value config file");
    app.add_option("--set", set, "extra key=value override (repeatable)");
    const std::pair<const char*, const char*> flags[] = {
        {"--task", "task"},           {"--qubits", "n_qubits"},
        {"--layers", "n_layers"},     {"--batch", "batch_size"},
        {"--lr", "learning_rate"},    {"--method", "differentiator"},
        {"--epsilon", "epsilon"},     {"--seed", "seed"},
        {"--runs", "n_runs"},         {"--epochs", "epochs"},
        {"--shots", "shots"},         {"--optimizer", "optimizer"},
        {"--spsb-samples", "spsb_samples"}, {"--threads", "threads"},
        {"--points", "n_points"},     {"--images", "images"},
        {"--labels", "labels"},       {"--count", "image_count"},
    };
    for (const auto& [flag, key] : flags) {
      options[key] = app.add_option(flag, values[key], std::string("sets ") + key);
    }
    deterministic_flag = app.add_flag("--deterministic", deterministic,
                                      "sequential canonical execution");
  }

  ExperimentConfig resolve(ExperimentConfig base) const {
    if (!config_path.empty()) base = tasks::apply_key_values(base, read_config_file(config_path));
    std::map<std::string, std::string> overrides;
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) overrides[key] = values.at(key);
    }
    if (deterministic_flag->count() > 0) overrides["deterministic"] = "true";
    for (const auto& kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return tasks::apply_key_values(base, overrides);
  }

  bool has(const std::string& key) const {
    if (options.at(key)->count() > 0) return true;
    if (!config_path.empty() && read_config_file(config_path).contains(key)) return true;
    for (const auto& kv : set) {
      if (kv.rfind(key + "=", 0) == 0) return true;
    }
    return false;
  }
};

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("SPSB_OUT_DIR"); env && *env) return env;
  return "spsb-out";
}

void write_seed(const fs::path& dir, std::uint64_t seed) {
  std::ofstream(dir / "seed.txt") << seed << '\n';
}

// Trains n_runs seeds (seed, seed+1, ...). On a numerical abort the partial
// history is still written before rethrowing.
std::vector<tasks::RunHistory> run_seeds(const ExperimentConfig& config, const fs::path& csv,
                                         std::ostream& out) {
  std::vector<tasks::RunHistory> histories;
  for (int r = 0; r < config.n_runs; ++r) {
    ExperimentConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(r);
    try {
      histories.push_back(tasks::run_experiment(c));
    } catch (const tasks::TrainingAborted& e) {
      histories.push_back(e.partial());
      tasks::write_history_csv(csv, histories);
      throw;
    }
    const auto& last = histories.back().records.back();
    out << tasks::to_string(c.task) << ' ' << diff::to_string(c.differentiator) << " lr="
        << tasks::format_double(c.learning_rate) << " seed=" << c.seed << ": " << last.step
        << " steps, " << last.circuit_evals << " circuit evaluations, final loss " << last.loss
        << ", accuracy " << last.accuracy << '\n';
  }
  tasks::write_history_csv(csv, histories);
  return histories;
}

void write_summary(const fs::path& path, std::span<const tasks::RunHistory> histories) {
  const auto s = tasks::aggregate_runs(histories, tasks::default_window(histories.front().config.differentiator));
  std::ofstream out(path, std::ios::binary);
  out << "circuit_evals,median_loss,median_accuracy,smoothed_loss,smoothed_accuracy\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < s.circuit_evals.size(); ++i) {
    out << s.circuit_evals[i] << ',' << s.median_loss[i] << ',' << s.median_accuracy[i] << ','
        << s.smoothed_loss[i] << ',' << s.smoothed_accuracy[i] << '\n';
  }
}

int run_training(const ExperimentConfig& config, const fs::path& dir, std::ostream& out) {
  tasks::validate(config);
  fs::create_directories(dir);
  write_config_file(dir / "config.txt", config);
  write_seed(dir, config.seed);
  const auto histories = run_seeds(config, dir / "history.csv", out);
  if (histories.size() > 1) write_summary(dir / "summary.csv", histories);
  out << "wrote " << (dir / "history.csv").string() << '\n';
  return kOk;
}

int run_sweep(const ExperimentConfig& config, const std::vector<double>& lrs,
              const std::vector<std::string>& methods, const fs::path& dir, std::ostream& out) {
  tasks::validate(config);
  if (lrs.empty()) throw ConfigError("lr-sweep needs at least one learning rate");
  fs::create_directories(dir);
  write_config_file(dir / "config.txt", config);
  write_seed(dir, config.seed);
  for (const auto& m : methods) {
    for (double lr : lrs) {
      ExperimentConfig c = config;
      c.differentiator = diff::parse_method(m);
      c.learning_rate = lr;
      tasks::validate(c);
      const fs::path csv = dir / (m + "_lr" + tasks::format_double(lr) + ".csv");
      run_seeds(c, csv, out);
      out << "wrote " << csv.string() << '\n';
    }
  }
  return kOk;
}

struct OracleRow {
  std::string name;
  double measured;
  double threshold;
  bool pass;
};

std::vector<OracleRow> run_oracles(std::uint64_t seed, std::size_t spsb_samples) {
  std::vector<OracleRow> rows;
  Rng rng = make_stream(seed, {0x0cac1e});
  auto random_angles = [&](std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform(rng, lo, hi);
    return v;
  };

  // Parameter shift against central differences.
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int nq = 1 + static_cast<int>(rng() % 4);
    const int nl = 1 + static_cast<int>(rng() % 3);
    const auto circuit = qsim::build_iqp_circuit(nq, nl);
    const auto theta = random_angles(circuit.n_trainable(), -3.14159, 3.14159);
    const auto x = random_angles(circuit.n_inputs(), 0.0, 3.14159);
    const auto ps = diff::param_shift_jacobian(circuit, theta, x);
    const auto fd = diff::finite_diff_jacobian(circuit, theta, x, 1e-5);
    for (std::size_t i = 0; i < ps.data().size(); ++i) {
      worst = std::max(worst, std::abs(ps.data()[i] - fd.data()[i]));
    }
  }
  rows.push_back({"param-shift vs finite-diff (max abs err)", worst, 1e-7, worst < 1e-7});

  // Mean of single-sample SPSB estimates against the exact Jacobian.
  {
    const auto circuit = qsim::build_iqp_circuit(3, 3);
    const auto theta = random_angles(circuit.n_trainable(), -3.14159, 3.14159);
    const auto x = random_angles(circuit.n_inputs(), 0.0, 3.14159);
    const auto exact = diff::param_shift_jacobian(circuit, theta, x);
    const std::size_t n = exact.data().size();
    std::vector<double> sum(n, 0.0);
    std::vector<double> sum_sq(n, 0.0);
    for (std::size_t s = 0; s < spsb_samples; ++s) {
      const auto j = diff::spsb_jacobian(circuit, theta, x, 0.01, rng);
      for (std::size_t i = 0; i < n; ++i) {
        sum[i] += j.data()[i];
        sum_sq[i] += j.data()[i] * j.data()[i];
      }
    }
    double worst_ratio = 0.0;
    const double k = static_cast<double>(spsb_samples);
    for (std::size_t i = 0; i < n; ++i) {
      const double mean = sum[i] / k;
      const double var = std::max(0.0, (sum_sq[i] - k * mean * mean) / (k - 1));
      const double tol = std::max(3.0 * std::sqrt(var / k), 1e-3);
      worst_ratio = std::max(worst_ratio, std::abs(mean - exact.data()[i]) / tol);
    }
    rows.push_back({"spsb mean vs param-shift (|err| / tolerance)", worst_ratio, 1.0,
                    worst_ratio <= 1.0});
  }

  // Evaluation cost per Jacobian.
  {
    bool ok = true;
    std::size_t checked = 0;
    for (int nq : {1, 3, 5, 12}) {
      const int nl = nq == 12 ? 4 : (nq == 1 ? 1 : 3);
      const auto circuit = qsim::build_iqp_circuit(nq, nl);
      const auto theta = random_angles(circuit.n_trainable(), -1, 1);
      const auto x = random_angles(circuit.n_inputs(), 0, 3);
      qsim::EvalCounter counter;
      const qsim::RunOptions opts{&counter, 0, nullptr};
      diff::spsb_jacobian(circuit, theta, x, 0.01, rng, opts);
      ok = ok && counter.total() == 2;
      diff::param_shift_jacobian(circuit, theta, x, opts);
      ok = ok && counter.total() == 2 + 2 * circuit.n_trainable();
      ++checked;
    }
    rows.push_back({"evaluation counts (spsb 2, param-shift 2n)", static_cast<double>(checked),
                    4.0, ok});
  }

  // One parameter: spsb is exactly the central difference with step epsilon.
  {
    const auto circuit = qsim::build_iqp_circuit(1, 1);
    const std::vector<double> theta{0.3};
    const std::vector<double> x{0.7};
    const auto spsb = diff::spsb_jacobian(circuit, theta, x, 0.01, rng);
    const auto fd = diff::finite_diff_jacobian(circuit, theta, x, 0.01);
    const double err = std::abs(spsb(0, 0) - fd(0, 0));
    rows.push_back({"single-parameter spsb == central difference", err, 1e-12, err < 1e-12});
  }
  return rows;
}

int run_verify(std::uint64_t seed, std::size_t samples, std::ostream& out) {
  const auto rows = run_oracles(seed, samples);
  bool all = true;
  out << std::left << std::setw(48) << "check" << std::setw(14) << "measured" << std::setw(12)
      << "threshold" << "result\n";
  for (const auto& r : rows) {
    all = all && r.pass;
    std::ostringstream m;
    m << std::setprecision(4) << r.measured;
    std::ostringstream t;
    t << std::setprecision(4) << r.threshold;
    out << std::setw(48) << r.name << std::setw(14) << m.str() << std::setw(12) << t.str()
        << (r.pass ? "pass" : "FAIL") << '\n';
  }
  return all ? kOk : kNumericalError;
}

std::vector<double> parse_lr_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--lrs: cannot parse '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid quantum-classical training with SPSB and parameter-shift gradients", "spsb"};
  app.require_subcommand(1);

  auto* random_cmd = app.add_subcommand("random-task", "train on the random datapoints task");
  ConfigFlags random_flags;
  random_flags.attach(*random_cmd);
  std::string random_out;
  random_cmd->add_option("--out", random_out, "output directory");

  auto* quanv_cmd = app.add_subcommand("quanv", "train the quanvolutional network");
  ConfigFlags quanv_flags;
  quanv_flags.attach(*quanv_cmd);
  std::string quanv_out;
  quanv_cmd->add_option("--out", quanv_out, "output directory");

  auto* sweep_cmd = app.add_subcommand("lr-sweep", "learning-rate sweep for both differentiators");
  ConfigFlags sweep_flags;
  sweep_flags.attach(*sweep_cmd);
  std::string sweep_out;
  std::string lrs = "0.01,0.05,0.1,0.5,1";
  std::vector<std::string> methods{"spsb", "param-shift"};
  sweep_cmd->add_option("--out", sweep_out, "output directory");
  sweep_cmd->add_option("--lrs", lrs, "comma-separated learning rates");
  sweep_cmd->add_option("--methods", methods, "differentiators to sweep");

  auto* verify_cmd = app.add_subcommand("verify", "run the gradient oracle checks");
  std::uint64_t verify_seed = 2023;
  std::size_t verify_samples = 10000;
  verify_cmd->add_option("--seed", verify_seed, "oracle seed");
  verify_cmd->add_option("--samples", verify_samples, "spsb samples for the mean check")
      ->check(CLI::Range(std::size_t{2}, std::size_t{100000000}));

  auto* plot_cmd = app.add_subcommand("plot", "SVG loss curves from history CSVs");
  std::vector<std::string> csvs;
  std::string svg_out = "loss.svg";
  std::optional<std::size_t> window;
  bool no_raw = false;
  bool accuracy = false;
  plot_cmd->add_option("--csv", csvs, "history CSV (repeatable)")->required();
  plot_cmd->add_option("--out", svg_out, "output SVG path");
  plot_cmd->add_option("--window", window, "smoothing window for every series");
  plot_cmd->add_flag("--no-raw", no_raw, "omit the unsmoothed overlay");
  plot_cmd->add_flag("--accuracy", accuracy, "add an accuracy panel");

  std::vector<std::string> argv_store{"spsb"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*random_cmd) {
      ExperimentConfig base;
      base.task = tasks::Task::RandomA;
      const auto config = random_flags.resolve(base);
      if (config.task == tasks::Task::Quanv) {
        throw ConfigError("random-task runs random-a or random-b; use the quanv subcommand");
      }
      return run_training(config, output_dir(random_out), out);
    }
    if (*quanv_cmd) {
      ExperimentConfig base;
      base.task = tasks::Task::Quanv;
      base.n_qubits = 4;
      base.batch_size = 50;
      base.images = SPSB_DATA_DIR "/synthetic-images-idx3-ubyte";
      base.labels = SPSB_DATA_DIR "/synthetic-labels-idx1-ubyte";
      if (!quanv_flags.has("learning_rate")) {
        throw ConfigError("quanv needs an explicit learning rate (--lr)");
      }
      const auto config = quanv_flags.resolve(base);
      if (config.task != tasks::Task::Quanv) throw ConfigError("quanv subcommand needs task = quanv");
      return run_training(config, output_dir(quanv_out), out);
    }
    if (*sweep_cmd) {
      return run_sweep(sweep_flags.resolve(ExperimentConfig{}), parse_lr_list(lrs), methods,
                       output_dir(sweep_out), out);
    }
    if (*verify_cmd) return run_verify(verify_seed, verify_samples, out);
    if (*plot_cmd) {
      std::vector<fs::path> paths(csvs.begin(), csvs.end());
      plot::PlotOptions opts{window, !no_raw, accuracy};
      plot::emit_plot(paths, svg_out, opts);
      out << "wrote " << svg_out << '\n';
      return kOk;
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kNumericalError;
  } catch (const InvariantError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
  return kConfigError;
}

int run_command(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_command(args, std::cout, std::cerr);
}

}  // namespace spsb::cli
