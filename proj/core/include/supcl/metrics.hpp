#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>

#include "supcl/data.hpp"

namespace supcl {

double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> gold);
// Binary F1 for `positive_class`; 0 when precision + recall is 0.
double f1(std::span<const std::size_t> pred, std::span<const std::size_t> gold,
          std::size_t positive_class = 1);
// Binary Matthews correlation; 0 when any marginal of the confusion matrix is 0.
double mcc(std::span<const std::size_t> pred, std::span<const std::size_t> gold,
           std::size_t positive_class = 1);
double mse(std::span<const double> pred, std::span<const double> gold);
double pearson(std::span<const double> x, std::span<const double> y);
// Pearson over average-tie ranks.
double spearman(std::span<const double> x, std::span<const double> y);
std::vector<double> average_ranks(std::span<const double> x);

struct EvalReport {
  std::string task;
  std::string split;
  std::size_t n_examples = 0;
  std::optional<double> accuracy;
  std::optional<double> f1;
  std::optional<double> mcc;
  std::optional<double> pearson;
  std::optional<double> spearman;
  std::optional<double> mse;

  std::optional<double> get(Metric metric) const;
  // Present metrics, keyed by name.
  std::map<std::string, double> values() const;
  // "key=value" lines for terminal display.
  std::string to_key_value() const;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Fills the task's designated metrics. Regression tasks decode predicted
// classes to bin midpoints and compare against real-valued gold.
EvalReport compute_report(const TaskDef& task, std::string split,
                          std::span<const std::size_t> pred_classes,
                          std::span<const std::size_t> gold_classes,
                          std::span<const double> gold_values);

}  // namespace supcl
