#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "supcl/error.hpp"
#include "supcl/ops.hpp"
#include "supcl/optimizer.hpp"
#include "supcl/pipeline.hpp"

using namespace supcl;
using oracle::Vec;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected supcl::Error";
  return ErrorKind::io;
}

EncoderConfig small_encoder(std::size_t vocab) {
  EncoderConfig c;
  c.vocab_size = vocab;
  c.max_seq_len = 16;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 32;
  return c;
}

const TaskData& separable() {
  static const TaskData data = prepare_task(builtin_task("separable_keywords"),
                                            make_synthetic(SyntheticKind::separable_keywords, 200, 0), 16);
  return data;
}

TrainSpec quick_spec(Mode mode) {
  TrainSpec s = recommended_spec("separable_keywords", mode);
  s.stage_a_epochs = 3;
  s.stage_b_epochs = 100;
  s.batch_size = 16;
  return s;
}

EncodedSplit first_rows(const EncodedSplit& split, std::size_t n) {
  EncodedSplit out;
  out.rows.assign(split.rows.begin(), split.rows.begin() + static_cast<std::ptrdiff_t>(n));
  out.labels.assign(split.labels.begin(), split.labels.begin() + static_cast<std::ptrdiff_t>(n));
  out.values.assign(split.values.begin(), split.values.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

}  // namespace

TEST(TrainSpec, ValidationAndModes) {
  TrainSpec s = recommended_spec("sst2");
  EXPECT_NO_THROW(s.validate());
  s.temperature = -1.0;
  EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::config);
  s = recommended_spec("parity");
  s.learning_rate = 0.0;
  EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::config);
  s = recommended_spec("parity", Mode::selfsup_cl);
  EXPECT_EQ(s.schedule.views(), 2u);
  s.schedule = DropoutSchedule({0.0, 0.1, 0.2});
  EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::unsupported_view_count);
  EXPECT_EQ(mode_from_string("dropout_augmented_ce"), Mode::dropout_augmented_ce);
  EXPECT_EQ(kind_of([] { mode_from_string("mixup"); }), ErrorKind::config);
  EXPECT_EQ(reduction_from_string("mean"), Reduction::mean);
  EXPECT_EQ(kind_of([] { recommended_spec("imdb"); }), ErrorKind::config);
}

TEST(Sampler, CoversEverySampleOnceWithNoSingletons) {
  for (std::size_t n = 2; n <= 40; ++n) {
    for (std::size_t m : {2u, 3u, 4u, 8u}) {
      const auto batches = sample_batches(n, m, RngStream{n, m});
      const bool merged = m == 2 && n % 2 == 1;
      EXPECT_EQ(batches.size(), merged ? n / 2 : (n + m - 1) / m) << n << " " << m;
      std::multiset<std::size_t> seen;
      for (const auto& b : batches) {
        EXPECT_GE(b.size(), 2u);
        EXPECT_LE(b.size(), merged ? std::size_t{3} : m);
        seen.insert(b.begin(), b.end());
      }
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), 0);
      EXPECT_EQ(std::vector<std::size_t>(seen.begin(), seen.end()), all);
    }
  }
  EXPECT_EQ(sample_batches(10, 4, RngStream{1, 1}), sample_batches(10, 4, RngStream{1, 1}));
  EXPECT_NE(sample_batches(10, 4, RngStream{1, 1}), sample_batches(10, 4, RngStream{2, 1}));
  EXPECT_EQ(kind_of([] { sample_batches(1, 4, RngStream{}); }), ErrorKind::sampler);
  EXPECT_EQ(kind_of([] { sample_batches(5, 1, RngStream{}); }), ErrorKind::sampler);
}

TEST(AdamW, FirstStepMovesByLearningRateTimesSign) {
  Tensor bias({3}, {1.0, -2.0, 0.5}, true);
  Tensor matrix({1, 2}, {1.0, 1.0}, true);
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  AdamW opt({{bias, false}, {matrix, true}}, 0.01, cfg);
  // d/dx of sum(c * x) is c.
  sum(mul(bias, Tensor({3}, {3.0, -0.5, 0.0}))).backward();
  sum(mul(matrix, Tensor({1, 2}, {2.0, -4.0}))).backward();
  opt.step();
  EXPECT_NEAR(bias.data()[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(bias.data()[1], -2.0 + 0.01, 1e-9);
  EXPECT_EQ(bias.data()[2], 0.5);
  const double decayed = 1.0 - 0.01 * 0.1;
  EXPECT_NEAR(matrix.data()[0], decayed - 0.01, 1e-9);
  EXPECT_NEAR(matrix.data()[1], decayed + 0.01, 1e-9);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, ParametersWithoutGradientsAreUntouched) {
  Tensor used({2}, {1.0, 1.0}, true), unused({2, 2}, {1.0, 2.0, 3.0, 4.0}, true);
  AdamW opt({{used, false}, {unused, true}}, 0.1);
  sum(used).backward();
  opt.step();
  EXPECT_EQ(oracle::to_vec(unused.data()), (Vec{1.0, 2.0, 3.0, 4.0}));
  opt.zero_grad();
  EXPECT_FALSE(used.has_grad() && used.grad()[0] != 0.0);
}

TEST(Stage, ContrastiveLogsOneLossPerBatchAndIsDeterministic) {
  const TaskData& d = separable();
  const EncodedSplit train = first_rows(d.train, 16);
  const EncoderWeights init = init_weights(small_encoder(d.vocab.size()), 1);
  for (std::size_t m : {2u, 3u, 4u, 5u, 16u}) {
    TrainSpec s = quick_spec(Mode::supcl);
    s.batch_size = m;
    s.stage_a_epochs = 2;
    const EncoderRun a = train_supcl(s, train, init);
    ASSERT_EQ(a.log.records.size(), 2u);
    for (const EpochRecord& r : a.log.records) {
      EXPECT_EQ(r.stage, "contrastive");
      EXPECT_EQ(r.batch_losses.size(), (16 + m - 1) / m) << m;
      EXPECT_EQ(r.batch_rows, m * 2);
      for (double l : r.batch_losses) EXPECT_TRUE(std::isfinite(l));
    }
    const EncoderRun b = train_supcl(s, train, init);
    EXPECT_TRUE(a.log == b.log);
    EXPECT_EQ(a.weights.checksum(), b.weights.checksum());
  }
}

TEST(Stage, ContrastiveLossDecreases) {
  const TaskData& d = separable();
  TrainSpec s = quick_spec(Mode::supcl);
  s.stage_a_epochs = 8;
  const EncoderRun run = train_supcl(s, d.train, init_weights(small_encoder(d.vocab.size()), 2));
  const auto recs = run.log.stage("contrastive");
  ASSERT_EQ(recs.size(), 8u);
  EXPECT_LT(recs.back()->train_loss, recs.front()->train_loss);
}

TEST(Stage, FrozenProbeLeavesEncoderUntouched) {
  const TaskData& d = separable();
  const EncoderWeights w = init_weights(small_encoder(d.vocab.size()), 3);
  const std::uint64_t before = w.checksum();
  const ProbeRun probe = train_probe(w, quick_spec(Mode::supcl), d);
  EXPECT_EQ(w.checksum(), before);
  for (const NamedTensor& p : w.named_parameters()) {
    EXPECT_TRUE(!p.tensor.has_grad() || std::all_of(p.tensor.grad().begin(), p.tensor.grad().end(),
                                                    [](double g) { return g == 0.0; }))
        << p.name;
  }
  EXPECT_EQ(probe.log.stage("probe").size(), 100u);
  EXPECT_EQ(probe.head.n_classes(), 2u);
}

TEST(Stage, ProbeFitsOneHotFeatures) {
  const std::size_t n = 40, classes = 4;
  std::vector<std::size_t> labels(n);
  std::vector<double> x(n * classes, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i % classes;
    x[i * classes + labels[i]] = 1.0;
  }
  TrainSpec s = quick_spec(Mode::supcl);
  s.stage_b_epochs = 50;
  const Tensor features({n, classes}, x);
  const ProbeRun run = train_linear_probe(features, labels, classes, s, &features, labels);
  EXPECT_EQ(run.log.records.back().dev_metrics.at("accuracy"), 1.0);
  EXPECT_LT(run.log.records.back().train_loss, run.log.records.front().train_loss);
  EXPECT_EQ(kind_of([&] { train_linear_probe(features, labels, 3, s); }), ErrorKind::class_count_mismatch);
  EXPECT_EQ(kind_of([&] { train_linear_probe(features, std::vector<std::size_t>(3), 4, s); }), ErrorKind::shape);
}

TEST(Stage, TrainedEncoderBeatsRandomEncoderUnderProbe) {
  const TaskData& d = separable();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainSpec s = quick_spec(Mode::supcl);
    s.seed = seed;
    s.stage_a_epochs = 4;
    const EncoderWeights init = init_weights(small_encoder(d.vocab.size()), seed);
    const ProbeRun random = train_probe(init, s, d);
    const EncoderRun trained = train_supcl(s, d.train, init);
    const ProbeRun probe = train_probe(trained.weights, s, d);
    const double acc_random = evaluate(init, random.head, d.dev, d.task, "dev").accuracy.value();
    const double acc_trained = evaluate(trained.weights, probe.head, d.dev, d.task, "dev").accuracy.value();
    EXPECT_GE(acc_trained, acc_random) << seed;
  }
}

TEST(Stage, SupervisedWithUniqueLabelsMatchesSelfSupervised) {
  const TaskData& d = separable();
  EncodedSplit train = first_rows(d.train, 24);
  std::iota(train.labels.begin(), train.labels.end(), 0);
  TrainSpec s = quick_spec(Mode::supcl);
  s.batch_size = 6;
  s.stage_a_epochs = 2;
  const EncoderWeights init = init_weights(small_encoder(d.vocab.size()), 4);
  const EncoderRun sup = train_supcl(s, train, init);
  const EncoderRun self = train_selfsup(s, train, init);
  ASSERT_EQ(sup.log.records.size(), self.log.records.size());
  for (std::size_t e = 0; e < sup.log.records.size(); ++e) {
    const auto& a = sup.log.records[e].batch_losses;
    const auto& b = self.log.records[e].batch_losses;
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9 * a[i]);
  }
}

TEST(Baselines, DropoutAugmentedWithZeroScheduleEqualsStandardWithoutDropout) {
  const TaskData& d = separable();
  const EncoderWeights init = init_weights(small_encoder(d.vocab.size()), 5);
  TrainSpec aug = quick_spec(Mode::dropout_augmented_ce);
  aug.schedule = DropoutSchedule({0.0, 0.0});
  TrainSpec ce = quick_spec(Mode::standard_ce);
  ce.ce_dropout = 0.0;
  const ModelRun a = train_baseline(aug, d, init);
  const ModelRun b = train_baseline(ce, d, init);
  ASSERT_EQ(a.log.records.size(), b.log.records.size());
  for (std::size_t e = 0; e < a.log.records.size(); ++e) {
    const auto& x = a.log.records[e].batch_losses;
    const auto& y = b.log.records[e].batch_losses;
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], y[i], 1e-9);
    EXPECT_EQ(a.log.records[e].batch_rows, 2 * b.log.records[e].batch_rows);
  }
}

TEST(Baselines, StandardCeSolvesSeparableTask) {
  const TaskData& d = separable();
  TrainSpec s = recommended_spec("separable_keywords", Mode::standard_ce);
  s.stage_a_epochs = 5;
  const TaskData full = prepare_task(d.task, make_synthetic(SyntheticKind::separable_keywords, 400, 0), 32);
  const ExperimentResult r = run_experiment(s, full, EncoderConfig{});
  EXPECT_GE(r.dev.accuracy.value(), 0.95);
  EXPECT_EQ(r.log.stage("joint").size(), 5u);
  EXPECT_TRUE(r.test.has_value());
}

TEST(Baselines, SelfSupRunsBothStages) {
  const TaskData& d = separable();
  TrainSpec s = quick_spec(Mode::selfsup_cl);
  s.stage_a_epochs = 1;
  s.stage_b_epochs = 5;
  const ExperimentResult r = run_experiment(s, d, small_encoder(0));
  EXPECT_EQ(r.log.stage("contrastive").size(), 1u);
  EXPECT_EQ(r.log.stage("probe").size(), 5u);
}

TEST(Experiment, RejectsEncoderShorterThanTokenizedLength) {
  EncoderConfig c = small_encoder(0);
  c.max_seq_len = 8;
  EXPECT_EQ(kind_of([&] { run_experiment(quick_spec(Mode::supcl), separable(), c); }), ErrorKind::config);
}

TEST(RunLog, EqualityIgnoresWallClockAndEpochsIncrease) {
  RunLog a;
  EpochRecord r;
  r.stage = "probe";
  r.epoch = 1;
  r.train_loss = 0.5;
  a.append(r);
  RunLog b = a;
  b.records[0].wall_clock_s = 99.0;
  EXPECT_TRUE(a == b);
  b.records[0].train_loss = 0.25;
  EXPECT_FALSE(a == b);
  EXPECT_EQ(kind_of([&] { a.append(r); }), ErrorKind::config);
  r.stage = "contrastive";
  EXPECT_NO_THROW(a.append(r));
}

TEST(Grid, RanksByMetricThenFewerViewsAndFailuresLast) {
  const TaskData& d = separable();
  TrainSpec base = quick_spec(Mode::supcl);
  base.stage_a_epochs = 1;
  base.stage_b_epochs = 20;
  GridSpec grid;
  grid.schedules = {DropoutSchedule({0.0, 0.1, 0.2}), DropoutSchedule({0.0, 0.1})};
  grid.learning_rates = {-1.0, 1e-3, 3e-3};
  const auto cells = grid_search(base, grid, d, small_encoder(0));
  ASSERT_EQ(cells.size(), 6u);
  for (std::size_t i = 0; i < 4; ++i) {
    ASSERT_TRUE(cells[i].ok()) << cells[i].error;
    EXPECT_EQ(cells[i].metric_name, "accuracy");
    EXPECT_EQ(cells[i].batch_rows(), base.batch_size * cells[i].spec.schedule.views());
  }
  for (std::size_t i = 1; i < 4; ++i) {
    const auto &p = cells[i - 1], &q = cells[i];
    EXPECT_GE(*p.dev_metric, *q.dev_metric);
    if (*p.dev_metric == *q.dev_metric) {
      EXPECT_TRUE(p.spec.schedule.views() < q.spec.schedule.views() ||
                  (p.spec.schedule.views() == q.spec.schedule.views() &&
                   p.spec.learning_rate < q.spec.learning_rate));
    }
  }
  for (std::size_t i = 4; i < 6; ++i) {
    EXPECT_FALSE(cells[i].ok());
    EXPECT_EQ(cells[i].spec.learning_rate, -1.0);
    EXPECT_EQ(cells[i].error_category, ErrorCategory::config);
  }
  EXPECT_EQ(kind_of([&] { grid_search(base, GridSpec{}, d, small_encoder(0)); }), ErrorKind::config);
}
