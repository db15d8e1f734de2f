#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "supcl/contrastive.hpp"
#include "supcl/data.hpp"
#include "supcl/encoder.hpp"
#include "supcl/error.hpp"
#include "supcl/metrics.hpp"
#include "supcl/optimizer.hpp"

namespace supcl {

enum class Mode { supcl, selfsup_cl, standard_ce, dropout_augmented_ce };

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view name);
std::string_view to_string(Reduction reduction);
Reduction reduction_from_string(std::string_view name);

struct TrainSpec {
  std::string task;
  Mode mode = Mode::supcl;
  DropoutSchedule schedule{{0.0, 0.1}};
  double temperature = 0.05;
  double learning_rate = 1e-3;
  // Samples per batch before view expansion (M).
  std::size_t batch_size = 32;
  // Contrastive epochs, or joint epochs for the cross-entropy baselines.
  std::size_t stage_a_epochs = 5;
  // Full-batch probe steps on frozen embeddings.
  std::size_t stage_b_epochs = 200;
  double probe_learning_rate = 1e-2;
  // Single-pass dropout used by standard_ce.
  double ce_dropout = 0.1;
  AdamWConfig adam;
  std::uint64_t seed = 0;
  Reduction loss_reduction = Reduction::sum;

  void validate() const;
  bool contrastive() const { return mode == Mode::supcl || mode == Mode::selfsup_cl; }
};

// Per-task defaults: learning rate, batch size, schedule, and epochs for the
// GLUE tasks; desk-scale values for the synthetic ones.
TrainSpec recommended_spec(std::string_view task, Mode mode = Mode::supcl);

struct ProbeHead {
  Tensor weight;  // [d_model, n_classes]
  Tensor bias;    // [n_classes]

  std::size_t n_classes() const { return bias.size(); }
};

struct EpochRecord {
  std::string stage;  // "contrastive", "probe" or "joint"
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::vector<double> batch_losses;
  std::size_t batch_rows = 0;  // rows per full batch after view expansion
  std::map<std::string, double> dev_metrics;
  double wall_clock_s = 0.0;  // excluded from equality
};

struct RunLog {
  std::vector<EpochRecord> records;

  // Epochs must increase within a stage.
  void append(EpochRecord record);
  void extend(const RunLog& other);
  std::vector<const EpochRecord*> stage(std::string_view name) const;

  // Compares every logged number, ignoring wall-clock time.
  friend bool operator==(const RunLog& a, const RunLog& b);
};

// Shuffled batches of `batch_size`; a trailing singleton batch borrows one
// sample from its predecessor so every batch has at least 2 rows. With
// batch_size 2 the singleton joins its predecessor instead.
std::vector<std::vector<std::size_t>> sample_batches(std::size_t n, std::size_t batch_size,
                                                     const RngStream& rng);

// Throws a sampler error when a contrastive batch cannot form P(i)/B(i).
void check_label_structure(std::span<const std::size_t> labels);

struct EncoderRun {
  EncoderWeights weights;
  RunLog log;
};

// Stage A with the supervised contrastive loss; no classifier involved.
EncoderRun train_supcl(const TrainSpec& spec, const EncodedSplit& train, const EncoderWeights& initial);

// Stage A with the self-supervised loss (N == 2).
EncoderRun train_selfsup(const TrainSpec& spec, const EncodedSplit& train, const EncoderWeights& initial);

struct ProbeRun {
  ProbeHead head;
  RunLog log;
};

// Full-batch training of a linear layer on fixed features [n, d].
ProbeRun train_linear_probe(const Tensor& features, std::span<const std::size_t> labels,
                            std::size_t n_classes, const TrainSpec& spec,
                            const Tensor* dev_features = nullptr,
                            std::span<const std::size_t> dev_labels = {});

// Stage B: deterministic embeddings from the frozen encoder, then a probe.
ProbeRun train_probe(const EncoderWeights& frozen, const TrainSpec& spec, const TaskData& data);

struct ModelRun {
  EncoderWeights weights;
  ProbeHead head;
  RunLog log;
};

// standard_ce, dropout_augmented_ce, or selfsup_cl (stage A + probe).
ModelRun train_baseline(const TrainSpec& spec, const TaskData& data, const EncoderWeights& initial);

// Deterministic, no-dropout embeddings for a whole split.
Tensor embed_split(const EncoderWeights& weights, const EncodedSplit& split, std::size_t batch_size = 64);

std::vector<std::size_t> predict(const EncoderWeights& weights, const ProbeHead& head,
                                 const EncodedSplit& split);

EvalReport evaluate(const EncoderWeights& weights, const ProbeHead& head, const EncodedSplit& split,
                    const TaskDef& task, std::string split_name);

struct ExperimentResult {
  TrainSpec spec;
  EncoderWeights weights;
  ProbeHead head;
  RunLog log;
  EvalReport dev;
  std::optional<EvalReport> test;
};

// Initializes an encoder from `config` and spec.seed, trains per spec.mode,
// and evaluates on dev (and test when present).
ExperimentResult run_experiment(const TrainSpec& spec, const TaskData& data, EncoderConfig config);

struct GridSpec {
  std::vector<DropoutSchedule> schedules;
  std::vector<double> learning_rates;
};

struct GridCell {
  TrainSpec spec;
  std::string metric_name;
  std::optional<double> dev_metric;
  std::string error;  // set when the cell failed
  ErrorCategory error_category = ErrorCategory::numeric;

  bool ok() const { return error.empty(); }
  std::size_t batch_rows() const { return spec.batch_size * spec.schedule.views(); }
};

// Trains every (schedule, learning rate) pair and ranks by dev metric.
// Failed cells are kept, marked, and sorted last.
std::vector<GridCell> grid_search(const TrainSpec& base, const GridSpec& grid, const TaskData& data,
                                  const EncoderConfig& config, std::size_t jobs = 1);

}  // namespace supcl
