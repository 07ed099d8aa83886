#include <cmath>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "spsb/aggregate.hpp"
#include "spsb/dataset.hpp"
#include "spsb/error.hpp"
#include "spsb/models.hpp"
#include "spsb/train.hpp"

namespace spsb::tasks {
namespace {

const std::filesystem::path kData = SPSB_TEST_DATA_DIR;
const std::filesystem::path kImages = kData / "synthetic-images-idx3-ubyte";
const std::filesystem::path kLabels = kData / "synthetic-labels-idx1-ubyte";

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "spsb-tasks-test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

ExperimentConfig quanv_config() {
  ExperimentConfig c;
  c.task = Task::Quanv;
  c.n_qubits = 4;
  c.n_layers = 3;
  c.batch_size = 50;
  c.learning_rate = 0.05;
  c.images = kImages.string();
  c.labels = kLabels.string();
  return c;
}

TEST(RandomDataset, ShapeAndRange) {
  const auto d = gen_random_dataset(100, 5, 7);
  EXPECT_EQ(d.size(), 100u);
  EXPECT_EQ(d.n_features, 5u);
  ASSERT_EQ(d.features.size(), 500u);
  for (double v : d.features) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, std::numbers::pi);
  }
  for (int y : d.labels) EXPECT_TRUE(y == 0 || y == 1);
}

TEST(RandomDataset, SeedDetermines) {
  const auto a = gen_random_dataset(100, 5, 7);
  const auto b = gen_random_dataset(100, 5, 7);
  const auto c = gen_random_dataset(100, 5, 8);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.features, c.features);
}

TEST(RandomDataset, LabelsAreBalancedOnAverage) {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = gen_random_dataset(100, 3, seed);
    for (int y : d.labels) total += y;
  }
  EXPECT_NEAR(total / 1000.0, 0.5, 0.15);
}

TEST(AveragePool, Examples) {
  const std::vector<double> zeros(28 * 28, 0.0);
  for (double v : average_pool(zeros, 28, 28, 7)) EXPECT_EQ(v, 0.0);

  const std::vector<double> flat(28 * 28, 3.25);
  const auto pooled = average_pool(flat, 28, 28, 7);
  ASSERT_EQ(pooled.size(), 16u);
  for (double v : pooled) EXPECT_DOUBLE_EQ(v, 3.25);

  std::vector<double> spike(28 * 28, 0.0);
  spike[10 * 28 + 16] = 49.0;  // row 10, column 16 -> cell (1, 2)
  const auto s = average_pool(spike, 28, 28, 7);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(s[i], i == 1 * 4 + 2 ? 1.0 : 0.0);
}

TEST(Idx, RoundTrip) {
  IdxFile f{{2, 3, 2}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}};
  const auto path = scratch("roundtrip.idx");
  write_idx(path, f);
  const auto back = read_idx(path, kIdxImageMagic);
  EXPECT_EQ(back.dims, f.dims);
  EXPECT_EQ(back.data, f.data);
}

TEST(Idx, MalformedFilesNameTheFile) {
  const auto missing = scratch("does-not-exist.idx");
  std::filesystem::remove(missing);
  EXPECT_THROW(read_idx(missing, kIdxLabelMagic), DataError);

  const auto truncated = scratch("truncated.idx");
  {
    std::ofstream out(truncated, std::ios::binary);
    const unsigned char header[] = {0, 0, 8, 1, 0, 0, 0, 10, 1, 2, 3};
    out.write(reinterpret_cast<const char*>(header), sizeof header);
  }
  try {
    read_idx(truncated, kIdxLabelMagic);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated.idx"), std::string::npos) << e.what();
  }
  // A label file is not an image file.
  write_idx(truncated, IdxFile{{3}, {1, 2, 3}});
  EXPECT_THROW(read_idx(truncated, kIdxImageMagic), DataError);
}

TEST(Fixture, MatchesGenerator) {
  const auto digits = make_synthetic_digits(1100, 36);
  const auto images = read_idx(kImages, kIdxImageMagic);
  const auto labels = read_idx(kLabels, kIdxLabelMagic);
  EXPECT_EQ(images.dims, digits.images.dims);
  EXPECT_EQ(images.data, digits.images.data);
  EXPECT_EQ(labels.data, digits.labels.data);
}

TEST(Fixture, LoadsOneThousandTwoClassImages) {
  const auto raw = read_idx(kLabels, kIdxLabelMagic);
  std::size_t kept = 0, others = 0;
  for (auto y : raw.data) (y == 3 || y == 6) ? ++kept : ++others;
  EXPECT_GE(kept, 1000u);
  EXPECT_GT(others, 0u);

  const auto d = load_pooled_images(kImages, kLabels);
  EXPECT_EQ(d.size(), 1000u);
  EXPECT_EQ(d.n_features, 16u);
  EXPECT_EQ(d.provenance, Provenance::ImagePooled);
  std::size_t sixes = 0;
  for (int y : d.labels) {
    ASSERT_TRUE(y == 0 || y == 1);
    sixes += static_cast<std::size_t>(y);
  }
  EXPECT_GT(sixes, 350u);
  EXPECT_LT(sixes, 650u);
  for (double v : d.features) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, std::numbers::pi);
  }
}

TEST(Fixture, TooFewMatchingImagesIsADataError) {
  PooledImageOptions opts;
  opts.count = 5000;
  EXPECT_THROW(load_pooled_images(kImages, kLabels, opts), DataError);
}

TEST(Models, ParameterCounts) {
  ExperimentConfig a;
  auto ma = build_model(a, 1, nullptr);
  EXPECT_EQ(ma->circuit_parameter_count(), 15u);
  EXPECT_EQ(ma->classical_parameter_count(), 0u);

  ExperimentConfig b;
  b.task = Task::RandomB;
  auto mb = build_model(b, 1, nullptr);
  EXPECT_EQ(mb->circuit_parameter_count(), 15u);
  EXPECT_EQ(mb->classical_parameter_count(), 6u);

  auto mq = build_model(quanv_config(), 1, nullptr);
  EXPECT_EQ(mq->circuit_parameter_count(), 12u);
  EXPECT_EQ(mq->classical_parameter_count(), 34u);
  EXPECT_EQ(mq->windows_per_sample(), 4u);
}

TEST(Models, ForwardCountsOneEvaluationPerWindow) {
  qsim::EvalCounter counter;
  auto m = build_model(quanv_config(), 3, &counter);
  const std::vector<double> image(16, 1.0);
  graph::Tape tape;
  m->forward(tape, image, 1, 9);
  EXPECT_EQ(counter.total(), 4u);

  qsim::EvalCounter batch_counter;
  auto ma = build_model(ExperimentConfig{}, 3, &batch_counter);
  const auto data = gen_random_dataset(25, 5, 1);
  for (std::size_t i = 0; i < 25; ++i) {
    graph::Tape t;
    ma->forward(t, data.row(i), data.labels[i], i);
  }
  EXPECT_EQ(batch_counter.total(), 25u);
}

TEST(Models, InitialisationRanges) {
  ExperimentConfig b;
  b.task = Task::RandomB;
  auto m = build_model(b, 4, nullptr);
  for (auto* p : m->parameters()) {
    const double bound = p->name() == "theta" ? 0.1 : (p->name() == "dense.bias" ? 0.0 : 1.0 / std::sqrt(5.0));
    for (double v : p->value().values()) EXPECT_LE(std::abs(v), bound) << p->name();
  }
}

TEST(Models, Argmax) {
  const std::vector<double> tie{0.5, 0.5}, second{0.2, 0.8};
  EXPECT_EQ(argmax(tie), 0u);
  EXPECT_EQ(argmax(second), 1u);
}

TEST(Models, WrongFeatureCount) {
  ExperimentConfig c;
  qsim::EvalCounter counter;
  auto m = build_model(c, 1, &counter);
  const auto data = gen_random_dataset(50, 4, 1);
  EXPECT_THROW(train(*m, data, c, counter), ConfigError);
}

TEST(Config, Validation) {
  ExperimentConfig c;
  c.batch_size = 200;
  EXPECT_THROW(validate(c), ConfigError);
  ExperimentConfig q = quanv_config();
  q.n_qubits = 5;
  EXPECT_THROW(validate(q), ConfigError);
  ExperimentConfig lr;
  lr.learning_rate = -1;
  EXPECT_THROW(validate(lr), ConfigError);
}

TEST(Config, KeyValuesRoundTrip) {
  ExperimentConfig c = quanv_config();
  c.seed = 99;
  c.learning_rate = 0.1;
  c.differentiator = diff::Method::ParamShift;
  const auto back = apply_key_values(ExperimentConfig{}, to_key_values(c));
  EXPECT_EQ(to_key_values(back), to_key_values(c));
  EXPECT_THROW(apply_key_values(c, {{"learning_rat", "0.1"}}), ConfigError);
  EXPECT_THROW(apply_key_values(c, {{"batch_size", "ten"}}), ConfigError);
}

struct AccountingCase {
  Task task;
  diff::Method method;
  std::uint64_t per_step;
};

void PrintTo(const AccountingCase& c, std::ostream* os) {
  *os << to_string(c.task) << '/' << diff::to_string(c.method) << '/' << c.per_step;
}

class EvalAccounting : public ::testing::TestWithParam<AccountingCase> {};

TEST_P(EvalAccounting, EveryStepMatchesTheFormula) {
  const auto& tc = GetParam();
  ExperimentConfig c = tc.task == Task::Quanv ? quanv_config() : ExperimentConfig{};
  c.task = tc.task;
  c.differentiator = tc.method;
  c.deterministic = true;
  if (tc.task == Task::Quanv) c.image_count = 150;

  const auto h = run_experiment(c);
  ASSERT_FALSE(h.records.empty());
  for (std::size_t k = 0; k < h.records.size(); ++k) {
    EXPECT_EQ(h.records[k].step, k + 1);
    EXPECT_EQ(h.records[k].circuit_evals, (k + 1) * tc.per_step) << "step " << k + 1;
  }
  const std::size_t n_trainable = static_cast<std::size_t>(c.n_qubits * c.n_layers);
  EXPECT_EQ(evals_per_step(c, n_trainable), tc.per_step);
}

INSTANTIATE_TEST_SUITE_P(
    AllTasks, EvalAccounting,
    ::testing::Values(AccountingCase{Task::RandomA, diff::Method::Spsb, 75},
                      AccountingCase{Task::RandomA, diff::Method::ParamShift, 775},
                      AccountingCase{Task::RandomB, diff::Method::Spsb, 75},
                      AccountingCase{Task::RandomB, diff::Method::ParamShift, 775},
                      AccountingCase{Task::Quanv, diff::Method::Spsb, 600},
                      AccountingCase{Task::Quanv, diff::Method::ParamShift, 5000}),
    [](const ::testing::TestParamInfo<AccountingCase>& info) {
      std::string name = to_string(info.param.task) + "_" + diff::to_string(info.param.method);
      std::replace(name.begin(), name.end(), '-', '_');
      return name;
    });

TEST(Train, ZeroLearningRateFreezesParameters) {
  ExperimentConfig c;
  c.task = Task::RandomB;
  c.learning_rate = 0.0;
  c.batch_size = 100;
  c.epochs = 4;
  c.deterministic = true;
  qsim::EvalCounter counter;
  auto m = build_model(c, c.seed, &counter);
  std::vector<std::vector<double>> before;
  for (auto* p : m->parameters()) before.emplace_back(p->value().values().begin(), p->value().values().end());
  const auto h = train(*m, make_dataset(c), c, counter);
  std::size_t k = 0;
  for (auto* p : m->parameters()) {
    EXPECT_EQ(std::vector<double>(p->value().values().begin(), p->value().values().end()), before[k++]);
  }
  // One full-data batch per epoch: only the summation order changes.
  for (const auto& r : h.records) EXPECT_NEAR(r.loss, h.records[0].loss, 1e-12);
}

TEST(Train, SequentialRunsAreReproducible) {
  ExperimentConfig c;
  c.task = Task::RandomB;
  c.epochs = 3;
  c.deterministic = true;
  const auto a = run_experiment(c);
  const auto b = run_experiment(c);
  EXPECT_EQ(a.records, b.records);

  c.deterministic = false;
  c.threads = 4;
  EXPECT_EQ(run_experiment(c).records, a.records);

  c.seed = 2;
  EXPECT_NE(run_experiment(c).records, a.records);
}

TEST(Train, SmallBatchesStayFinite) {
  ExperimentConfig c;
  c.task = Task::RandomB;
  c.batch_size = 2;
  c.epochs = 2;
  const auto h = run_experiment(c);
  EXPECT_EQ(h.records.size(), 100u);
  for (const auto& r : h.records) EXPECT_TRUE(std::isfinite(r.loss));
}

TEST(Train, OverfitsRandomLabels) {
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ExperimentConfig c;
    c.n_qubits = 2;
    c.differentiator = diff::Method::ParamShift;
    c.learning_rate = 0.01;
    c.epochs = 75;  // 4 batches per epoch -> 300 steps
    c.seed = seed;
    c.deterministic = true;
    qsim::EvalCounter counter;
    auto m = build_model(c, seed, &counter);
    const auto data = make_dataset(c);
    const double initial = evaluate(*m, data).loss;
    const auto h = train(*m, data, c, counter);
    ASSERT_EQ(h.records.size(), 300u);
    if (evaluate(*m, data).loss < initial) ++improved;
  }
  EXPECT_GE(improved, 9);
}

TEST(Train, AbortsOnNonFiniteLoss) {
  ExperimentConfig c;
  c.task = Task::RandomB;
  c.batch_size = 100;
  c.epochs = 3;
  qsim::EvalCounter counter;
  auto m = build_model(c, 1, &counter);
  auto data = gen_random_dataset(100, 5, 1);
  data.features[17] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(*m, data, c, counter);
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    ASSERT_EQ(e.partial().records.size(), 1u);
    EXPECT_FALSE(std::isfinite(e.partial().records.back().loss));
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos) << e.what();
  }
}

TEST(Csv, RoundTripIsExact) {
  ExperimentConfig c;
  c.learning_rate = 0.1;
  c.differentiator = diff::Method::ParamShift;
  std::vector<RunHistory> runs;
  for (std::uint64_t seed : {3, 4}) {
    c.seed = seed;
    RunHistory h{c, seed, {}};
    for (std::size_t s = 1; s <= 5; ++s) {
      h.records.push_back({s, s * 775, 1.0 / 3.0 + static_cast<double>(seed) * 1e-17 * static_cast<double>(s),
                           0.1 * static_cast<double>(s)});
    }
    runs.push_back(h);
  }
  std::stringstream ss;
  write_history_csv(ss, runs);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), kCsvHeader);
  const auto back = read_history_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].records, runs[i].records);
    EXPECT_EQ(back[i].seed, runs[i].seed);
    EXPECT_EQ(back[i].config.learning_rate, 0.1);
    EXPECT_EQ(back[i].config.differentiator, diff::Method::ParamShift);
  }
}

TEST(Csv, RejectsBadInput) {
  std::stringstream empty;
  EXPECT_THROW(read_history_csv(empty), DataError);
  std::stringstream header_only(std::string(kCsvHeader) + "\n");
  EXPECT_THROW(read_history_csv(header_only), DataError);
  std::stringstream bad(std::string(kCsvHeader) + "\n1,75,x,0.5,spsb,random-a,0.01,1\n");
  EXPECT_THROW(read_history_csv(bad), DataError);
}

RunHistory history_with(std::vector<std::pair<std::uint64_t, double>> points, std::uint64_t seed) {
  RunHistory h{ExperimentConfig{}, seed, {}};
  h.config.seed = seed;
  std::size_t step = 0;
  for (auto [evals, loss] : points) h.records.push_back({++step, evals, loss, 0.5});
  return h;
}

TEST(Aggregate, MedianAndRollingMean) {
  EXPECT_DOUBLE_EQ(median({1.0, 9.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  const std::vector<double> s{3, 6, 9};
  EXPECT_DOUBLE_EQ(rolling_mean(s, 3).back(), 6.0);
  EXPECT_EQ(rolling_mean(s, 1), s);
  EXPECT_EQ(default_window(diff::Method::Spsb), 10u);
  EXPECT_EQ(default_window(diff::Method::ParamShift), 3u);
}

TEST(Aggregate, MedianAcrossRuns) {
  const std::vector<RunHistory> runs{history_with({{75, 1.0}}, 1), history_with({{75, 2.0}}, 2),
                                     history_with({{75, 9.0}}, 3)};
  const auto s = aggregate_runs(runs, 1);
  ASSERT_EQ(s.circuit_evals, (std::vector<std::uint64_t>{75}));
  EXPECT_DOUBLE_EQ(s.median_loss[0], 2.0);
  EXPECT_EQ(s.smoothed_loss, s.median_loss);
  EXPECT_EQ(s.runs, 3u);
}

TEST(Aggregate, LastValueInterpolationOnTheUnionGrid) {
  const std::vector<RunHistory> runs{history_with({{10, 5.0}, {20, 3.0}}, 1),
                                     history_with({{15, 4.0}}, 2)};
  const auto s = aggregate_runs(runs, 1);
  ASSERT_EQ(s.circuit_evals, (std::vector<std::uint64_t>{10, 15, 20}));
  EXPECT_DOUBLE_EQ(s.median_loss[0], 5.0);   // run 2 has no record yet
  EXPECT_DOUBLE_EQ(s.median_loss[1], 4.5);
  EXPECT_DOUBLE_EQ(s.median_loss[2], 3.5);
  EXPECT_EQ(first_evals_reaching(s, s.median_loss, 4.5), std::optional<std::uint64_t>(15));
  EXPECT_FALSE(first_evals_reaching(s, s.median_loss, 1.0).has_value());
}

TEST(Aggregate, MismatchedConfigsAreRejected) {
  auto a = history_with({{10, 1.0}}, 1);
  auto b = history_with({{10, 1.0}}, 2);
  b.config.learning_rate = 0.5;
  const std::vector<RunHistory> runs{a, b};
  EXPECT_THROW(aggregate_runs(runs, 3), UsageError);
  EXPECT_THROW(aggregate_runs(std::span<const RunHistory>{}, 3), UsageError);
}

}  // namespace
}  // namespace spsb::tasks
