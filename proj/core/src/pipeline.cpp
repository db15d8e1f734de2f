#include "supcl/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>

#include "supcl/error.hpp"
#include "supcl/ops.hpp"

namespace supcl {

namespace {

// Stream tags; supcl and selfsup_cl share the contrastive tags so that runs
// with identical seeds see identical batches and dropout masks.
constexpr std::uint64_t kContrastiveStream = 0xA;
constexpr std::uint64_t kJointStream = 0xC;
constexpr std::uint64_t kHeadInitStream = 0xE;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<Parameter> encoder_parameters(const EncoderWeights& weights) {
  std::vector<Parameter> out;
  for (const NamedTensor& p : weights.named_parameters()) {
    out.push_back({p.tensor, p.tensor.rank() == 2});
  }
  return out;
}

ProbeHead init_head(std::size_t d_model, std::size_t n_classes, std::uint64_t seed) {
  auto engine = RngStream{seed, kHeadInitStream}.engine();
  std::vector<double> w(d_model * n_classes);
  for (double& v : w) v = 0.02 * standard_normal(engine);
  return ProbeHead{Tensor({d_model, n_classes}, std::move(w), true), Tensor::zeros({n_classes}, true)};
}

Tensor head_logits(const ProbeHead& head, const Tensor& features) {
  return add_bias(matmul(features, head.weight), head.bias);
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.dim(0), c = logits.dim(1);
  auto d = logits.data();
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = static_cast<std::size_t>(std::max_element(d.begin() + static_cast<std::ptrdiff_t>(r * c),
                                                       d.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)) -
                                      (d.begin() + static_cast<std::ptrdiff_t>(r * c)));
  }
  return out;
}

void check_finite_loss(double loss, std::string_view stage, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    fail(ErrorKind::numeric, "non-finite " + std::string(stage) + " loss in epoch " + std::to_string(epoch));
  }
}

void check_labels(std::span<const std::size_t> labels, std::size_t n_classes) {
  for (std::size_t l : labels) {
    if (l >= n_classes) {
      fail(ErrorKind::class_count_mismatch, "label " + std::to_string(l) + " but the task has " +
                                                std::to_string(n_classes) + " classes");
    }
  }
}

EncoderRun train_contrastive(const TrainSpec& spec, const EncodedSplit& train, const EncoderWeights& initial,
                             bool supervised) {
  spec.validate();
  if (train.size() == 0) fail(ErrorKind::empty_input, "training split is empty");
  if (!supervised && spec.schedule.views() != 2) {
    fail(ErrorKind::unsupported_view_count, "self-supervised training needs a 2-pass schedule, got " +
                                                spec.schedule.to_string());
  }
  EncoderRun run{initial.clone(), {}};
  AdamW optimizer(encoder_parameters(run.weights), spec.learning_rate, spec.adam);
  const RngStream root{spec.seed, kContrastiveStream};

  for (std::size_t epoch = 1; epoch <= spec.stage_a_epochs; ++epoch) {
    const auto start = Clock::now();
    const RngStream epoch_rng = root.derive(epoch);
    EpochRecord record;
    record.stage = "contrastive";
    record.epoch = epoch;
    record.batch_rows = spec.batch_size * spec.schedule.views();
    const auto batches = sample_batches(train.size(), spec.batch_size, epoch_rng.derive(0));
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const TokenBatch batch = make_batch(train, batches[b]);
      if (supervised) check_label_structure(batch.labels);
      const ViewBatch views =
          build_views(run.weights, batch, spec.schedule, epoch_rng.derive(b + 1), spec.temperature, true);
      const PairIndex index = build_pair_index(views, supervised);
      Tensor loss = supervised ? sup_loss(views, index, spec.loss_reduction)
                               : self_sup_loss(views, index, spec.loss_reduction);
      check_finite_loss(loss.item(), record.stage, epoch);
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      record.batch_losses.push_back(loss.item());
    }
    double total = 0.0;
    for (double l : record.batch_losses) total += l;
    record.train_loss = total / static_cast<double>(record.batch_losses.size());
    record.wall_clock_s = seconds_since(start);
    run.log.append(std::move(record));
  }
  return run;
}

}  // namespace

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::supcl: return "supcl";
    case Mode::selfsup_cl: return "selfsup_cl";
    case Mode::standard_ce: return "standard_ce";
    case Mode::dropout_augmented_ce: return "dropout_augmented_ce";
  }
  return "unknown";
}

Mode mode_from_string(std::string_view name) {
  for (Mode m : {Mode::supcl, Mode::selfsup_cl, Mode::standard_ce, Mode::dropout_augmented_ce}) {
    if (to_string(m) == name) return m;
  }
  fail(ErrorKind::config, "unknown mode '" + std::string(name) + "'");
}

std::string_view to_string(Reduction reduction) {
  return reduction == Reduction::sum ? "sum" : "mean";
}

Reduction reduction_from_string(std::string_view name) {
  if (name == "sum") return Reduction::sum;
  if (name == "mean") return Reduction::mean;
  fail(ErrorKind::config, "unknown loss reduction '" + std::string(name) + "'");
}

void TrainSpec::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::config, "train spec: " + msg); };
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (schedule.views() < 2) bad("schedule needs at least 2 passes");
  if (!positive(temperature)) bad("temperature must be > 0");
  if (!positive(learning_rate)) bad("learning_rate must be > 0");
  if (!positive(probe_learning_rate)) bad("probe_learning_rate must be > 0");
  if (batch_size < 2) bad("batch_size must be >= 2");
  if (stage_a_epochs == 0) bad("stage_a_epochs must be >= 1");
  if (contrastive() && stage_b_epochs == 0) bad("stage_b_epochs must be >= 1");
  if (!(ce_dropout >= 0.0 && ce_dropout < 1.0)) bad("ce_dropout must lie in [0,1)");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    bad("adam betas must lie in [0,1)");
  }
  if (!positive(adam.eps)) bad("adam eps must be > 0");
  if (!(adam.weight_decay >= 0.0) || !std::isfinite(adam.weight_decay)) bad("weight_decay must be >= 0");
  if (mode == Mode::selfsup_cl && schedule.views() != 2) {
    fail(ErrorKind::unsupported_view_count, "selfsup_cl needs a 2-pass schedule, got " + schedule.to_string());
  }
}

TrainSpec recommended_spec(std::string_view task, Mode mode) {
  struct Row {
    const char* task;
    double lr;
    std::size_t batch;
    std::vector<double> schedule;
    std::size_t epochs;
    double temperature = 0.05;
  };
  static const std::vector<Row> table = {
      {"cola", 5e-5, 128, {0.0, 0.1, 0.2}, 5},
      {"mrpc", 1e-4, 128, {0.0, 0.05, 0.1, 0.2}, 5},
      {"rte", 1e-4, 48, {0.0, 0.1, 0.2}, 5},
      {"stsb", 1e-4, 64, {0.0, 0.05, 0.1, 0.2}, 5},
      {"sst2", 5e-5, 320, {0.0, 0.1, 0.2}, 5},
      {"wnli", 1e-4, 320, {0.0, 0.1, 0.2}, 5},
      {"qnli", 5e-5, 48, {0.0, 0.2}, 2},
      {"qqp", 5e-5, 16, {0.0, 0.2, 0.3, 0.4, 0.5}, 1},
      {"mnli", 5e-5, 8, {0.1, 0.1}, 3},
      // Desk-scale synthetic tasks train a small encoder from scratch.
      {"separable_keywords", 3e-3, 16, {0.0, 0.1}, 10, 0.2},
      {"parity", 1e-3, 32, {0.0, 0.1}, 100, 0.2},
      {"pair_overlap", 1e-3, 32, {0.0, 0.1}, 30, 0.2},
  };
  for (const Row& row : table) {
    if (row.task != task) continue;
    TrainSpec spec;
    spec.task = row.task;
    spec.mode = mode;
    spec.learning_rate = row.lr;
    spec.batch_size = row.batch;
    spec.schedule = DropoutSchedule(row.schedule);
    spec.stage_a_epochs = row.epochs;
    spec.temperature = row.temperature;
    if (mode == Mode::selfsup_cl && spec.schedule.views() != 2) {
      spec.schedule = DropoutSchedule({0.1, 0.1});
    }
    return spec;
  }
  fail(ErrorKind::config, "no recommended settings for task '" + std::string(task) + "'");
}

void RunLog::append(EpochRecord record) {
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    if (it->stage != record.stage) continue;
    if (record.epoch <= it->epoch) {
      fail(ErrorKind::config, "run log epochs must increase within stage '" + record.stage + "'");
    }
    break;
  }
  records.push_back(std::move(record));
}

void RunLog::extend(const RunLog& other) {
  for (const EpochRecord& r : other.records) append(r);
}

std::vector<const EpochRecord*> RunLog::stage(std::string_view name) const {
  std::vector<const EpochRecord*> out;
  for (const EpochRecord& r : records)
    if (r.stage == name) out.push_back(&r);
  return out;
}

bool operator==(const RunLog& a, const RunLog& b) {
  if (a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const EpochRecord& x = a.records[i];
    const EpochRecord& y = b.records[i];
    if (x.stage != y.stage || x.epoch != y.epoch || x.train_loss != y.train_loss ||
        x.batch_losses != y.batch_losses || x.batch_rows != y.batch_rows || x.dev_metrics != y.dev_metrics) {
      return false;
    }
  }
  return true;
}

std::vector<std::vector<std::size_t>> sample_batches(std::size_t n, std::size_t batch_size, const RngStream& rng) {
  if (batch_size < 2) fail(ErrorKind::sampler, "batch size must be >= 2");
  if (n < 2) fail(ErrorKind::sampler, "need at least 2 samples to form a batch, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto engine = rng.engine();
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(engine) * static_cast<double>(i));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    auto& prev = batches[batches.size() - 2];
    if (prev.size() > 2) {
      batches.back().insert(batches.back().begin(), prev.back());
      prev.pop_back();
    } else {
      // batch_size 2: borrowing would strand another singleton, so merge.
      prev.push_back(batches.back().front());
      batches.pop_back();
    }
  }
  return batches;
}

void check_label_structure(std::span<const std::size_t> labels) {
  if (labels.size() < 2) {
    fail(ErrorKind::sampler, "contrastive batch has " + std::to_string(labels.size()) + " sample(s); need >= 2");
  }
}

EncoderRun train_supcl(const TrainSpec& spec, const EncodedSplit& train, const EncoderWeights& initial) {
  if (spec.mode != Mode::supcl) fail(ErrorKind::config, "train_supcl requires mode supcl");
  return train_contrastive(spec, train, initial, true);
}

EncoderRun train_selfsup(const TrainSpec& spec, const EncodedSplit& train, const EncoderWeights& initial) {
  return train_contrastive(spec, train, initial, false);
}

ProbeRun train_linear_probe(const Tensor& features, std::span<const std::size_t> labels, std::size_t n_classes,
                            const TrainSpec& spec, const Tensor* dev_features,
                            std::span<const std::size_t> dev_labels) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    fail(ErrorKind::shape, "probe features " + shape_str(features.shape()) + " do not match " +
                               std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) fail(ErrorKind::empty_input, "probe training set is empty");
  if (n_classes < 2) fail(ErrorKind::class_count_mismatch, "probe needs at least 2 classes");
  check_labels(labels, n_classes);
  if (dev_features) check_labels(dev_labels, n_classes);

  const Tensor inputs = features.detach();
  ProbeRun run{init_head(features.dim(1), n_classes, spec.seed), {}};
  AdamW optimizer({{run.head.weight, true}, {run.head.bias, false}}, spec.probe_learning_rate, spec.adam);
  for (std::size_t epoch = 1; epoch <= spec.stage_b_epochs; ++epoch) {
    const auto start = Clock::now();
    Tensor loss = cross_entropy(head_logits(run.head, inputs), labels);
    check_finite_loss(loss.item(), "probe", epoch);
    optimizer.zero_grad();
    loss.backward();
    optimizer.step();

    EpochRecord record;
    record.stage = "probe";
    record.epoch = epoch;
    record.train_loss = loss.item();
    record.batch_losses = {loss.item()};
    record.batch_rows = labels.size();
    if (dev_features && !dev_labels.empty()) {
      NoGradGuard no_grad;
      const auto pred = argmax_rows(head_logits(run.head, *dev_features));
      record.dev_metrics["accuracy"] = accuracy(pred, dev_labels);
    }
    record.wall_clock_s = seconds_since(start);
    run.log.append(std::move(record));
  }
  return run;
}

Tensor embed_split(const EncoderWeights& weights, const EncodedSplit& split, std::size_t batch_size) {
  if (split.size() == 0) fail(ErrorKind::empty_input, "cannot embed an empty split");
  NoGradGuard no_grad;
  std::vector<Tensor> parts;
  for (std::size_t start = 0; start < split.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(split.size(), start + batch_size); ++i) idx.push_back(i);
    parts.push_back(encode(weights, make_batch(split, idx), 0.0, RngStream{}, false));
  }
  return concat_rows(parts);
}

ProbeRun train_probe(const EncoderWeights& frozen, const TrainSpec& spec, const TaskData& data) {
  frozen.validate();
  const Tensor train_features = embed_split(frozen, data.train);
  if (data.dev.size() > 0) {
    const Tensor dev_features = embed_split(frozen, data.dev);
    return train_linear_probe(train_features, data.train.labels, data.task.n_classes, spec, &dev_features,
                              data.dev.labels);
  }
  return train_linear_probe(train_features, data.train.labels, data.task.n_classes, spec);
}

std::vector<std::size_t> predict(const EncoderWeights& weights, const ProbeHead& head, const EncodedSplit& split) {
  NoGradGuard no_grad;
  return argmax_rows(head_logits(head, embed_split(weights, split)));
}

EvalReport evaluate(const EncoderWeights& weights, const ProbeHead& head, const EncodedSplit& split,
                    const TaskDef& task, std::string split_name) {
  if (split.size() == 0) fail(ErrorKind::empty_input, "cannot evaluate an empty split");
  if (head.n_classes() != task.n_classes) {
    fail(ErrorKind::class_count_mismatch, "head has " + std::to_string(head.n_classes()) +
                                              " classes, task '" + task.name + "' has " +
                                              std::to_string(task.n_classes));
  }
  const auto pred = predict(weights, head, split);
  return compute_report(task, std::move(split_name), pred, split.labels, split.values);
}

ModelRun train_baseline(const TrainSpec& spec, const TaskData& data, const EncoderWeights& initial) {
  spec.validate();
  if (spec.mode == Mode::supcl) fail(ErrorKind::config, "train_baseline does not handle mode supcl");
  if (spec.mode == Mode::selfsup_cl) {
    EncoderRun stage_a = train_selfsup(spec, data.train, initial);
    ProbeRun stage_b = train_probe(stage_a.weights, spec, data);
    stage_a.log.extend(stage_b.log);
    return ModelRun{std::move(stage_a.weights), std::move(stage_b.head), std::move(stage_a.log)};
  }
  if (data.train.size() == 0) fail(ErrorKind::empty_input, "training split is empty");
  check_labels(data.train.labels, data.task.n_classes);

  ModelRun run{initial.clone(), init_head(initial.config.d_model, data.task.n_classes, spec.seed), {}};
  std::vector<Parameter> params = encoder_parameters(run.weights);
  params.push_back({run.head.weight, true});
  params.push_back({run.head.bias, false});
  AdamW optimizer(std::move(params), spec.learning_rate, spec.adam);
  const bool augmented = spec.mode == Mode::dropout_augmented_ce;
  const RngStream root{spec.seed, kJointStream};

  for (std::size_t epoch = 1; epoch <= spec.stage_a_epochs; ++epoch) {
    const auto start = Clock::now();
    const RngStream epoch_rng = root.derive(epoch);
    EpochRecord record;
    record.stage = "joint";
    record.epoch = epoch;
    record.batch_rows = spec.batch_size * (augmented ? spec.schedule.views() : 1);
    const auto batches = sample_batches(data.train.size(), spec.batch_size, epoch_rng.derive(0));
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const TokenBatch batch = make_batch(data.train, batches[b]);
      const RngStream batch_rng = epoch_rng.derive(b + 1);
      Tensor loss;
      if (augmented) {
        // Every view keeps its origin's label.
        const ViewBatch views = build_views(run.weights, batch, spec.schedule, batch_rng, spec.temperature, true);
        loss = cross_entropy(head_logits(run.head, views.embeddings), views.label);
      } else {
        Tensor emb = encode(run.weights, batch, spec.ce_dropout, batch_rng.derive(0), true);
        loss = cross_entropy(head_logits(run.head, emb), batch.labels);
      }
      check_finite_loss(loss.item(), record.stage, epoch);
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      record.batch_losses.push_back(loss.item());
    }
    double total = 0.0;
    for (double l : record.batch_losses) total += l;
    record.train_loss = total / static_cast<double>(record.batch_losses.size());
    if (data.dev.size() > 0) record.dev_metrics = evaluate(run.weights, run.head, data.dev, data.task, "dev").values();
    record.wall_clock_s = seconds_since(start);
    run.log.append(std::move(record));
  }
  return run;
}

ExperimentResult run_experiment(const TrainSpec& spec, const TaskData& data, EncoderConfig config) {
  spec.validate();
  config.vocab_size = data.vocab.size();
  if (data.max_len > config.max_seq_len) {
    fail(ErrorKind::config, "tokenized length " + std::to_string(data.max_len) + " exceeds encoder max_seq_len " +
                                std::to_string(config.max_seq_len));
  }
  const EncoderWeights initial = init_weights(config, spec.seed);
  ExperimentResult result{spec, {}, {}, {}, {}, std::nullopt};
  if (spec.mode == Mode::supcl) {
    EncoderRun stage_a = train_supcl(spec, data.train, initial);
    ProbeRun stage_b = train_probe(stage_a.weights, spec, data);
    result.weights = std::move(stage_a.weights);
    result.head = std::move(stage_b.head);
    result.log = std::move(stage_a.log);
    result.log.extend(stage_b.log);
  } else {
    ModelRun run = train_baseline(spec, data, initial);
    result.weights = std::move(run.weights);
    result.head = std::move(run.head);
    result.log = std::move(run.log);
  }
  result.dev = evaluate(result.weights, result.head, data.dev, data.task, "dev");
  if (data.test.size() > 0) result.test = evaluate(result.weights, result.head, data.test, data.task, "test");
  return result;
}

std::vector<GridCell> grid_search(const TrainSpec& base, const GridSpec& grid, const TaskData& data,
                                  const EncoderConfig& config, std::size_t jobs) {
  if (grid.schedules.empty() || grid.learning_rates.empty()) fail(ErrorKind::config, "grid is empty");
  std::vector<GridCell> cells;
  for (const DropoutSchedule& schedule : grid.schedules) {
    for (double lr : grid.learning_rates) {
      GridCell cell;
      cell.spec = base;
      cell.spec.schedule = schedule;
      cell.spec.learning_rate = lr;
      cell.metric_name = std::string(to_string(data.task.primary_metric()));
      cells.push_back(std::move(cell));
    }
  }

  auto run_cell = [&](GridCell& cell) {
    try {
      const ExperimentResult result = run_experiment(cell.spec, data, config);
      cell.dev_metric = result.dev.get(data.task.primary_metric());
      if (!cell.dev_metric) cell.error = "degenerate_input: dev metric undefined";
    } catch (const Error& e) {
      cell.error = std::string(to_string(e.kind())) + ": " + e.what();
      cell.error_category = e.category();
    } catch (const std::exception& e) {
      cell.error = std::string("internal: ") + e.what();
    }
  };

  if (jobs <= 1) {
    for (GridCell& cell : cells) run_cell(cell);
  } else {
    for (std::size_t start = 0; start < cells.size(); start += jobs) {
      std::vector<std::future<void>> wave;
      for (std::size_t i = start; i < std::min(cells.size(), start + jobs); ++i) {
        wave.push_back(std::async(std::launch::async, run_cell, std::ref(cells[i])));
      }
      for (auto& f : wave) f.get();
    }
  }

  const bool lower_is_better = data.task.primary_metric() == Metric::mse;
  std::stable_sort(cells.begin(), cells.end(), [&](const GridCell& a, const GridCell& b) {
    if (a.ok() != b.ok()) return a.ok();
    if (!a.ok()) return false;
    if (*a.dev_metric != *b.dev_metric) {
      return lower_is_better ? *a.dev_metric < *b.dev_metric : *a.dev_metric > *b.dev_metric;
    }
    if (a.spec.schedule.views() != b.spec.schedule.views()) return a.spec.schedule.views() < b.spec.schedule.views();
    return a.spec.learning_rate < b.spec.learning_rate;
  });
  return cells;
}

}  // namespace supcl
