#include "supcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "supcl/error.hpp"

namespace supcl {

namespace {

template <class A, class B>
void require_paired(std::span<A> a, std::span<B> b, std::size_t min_len, const char* metric) {
  if (a.size() != b.size()) {
    fail(ErrorKind::length_mismatch, std::string(metric) + ": length mismatch " +
                                         std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  if (a.size() < min_len) {
    fail(ErrorKind::empty_input, std::string(metric) + ": needs at least " + std::to_string(min_len) + " values");
  }
}

struct Confusion {
  double tp = 0, tn = 0, fp = 0, fn = 0;
};

Confusion confusion(std::span<const std::size_t> pred, std::span<const std::size_t> gold,
                    std::size_t positive) {
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == positive, g = gold[i] == positive;
    if (p && g) c.tp += 1;
    else if (!p && !g) c.tn += 1;
    else if (p) c.fp += 1;
    else c.fn += 1;
  }
  return c;
}

}  // namespace

double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> gold) {
  require_paired(pred, gold, 1, "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == gold[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double f1(std::span<const std::size_t> pred, std::span<const std::size_t> gold, std::size_t positive_class) {
  require_paired(pred, gold, 1, "f1");
  const Confusion c = confusion(pred, gold, positive_class);
  const double denom = 2.0 * c.tp + c.fp + c.fn;
  return c.tp == 0.0 ? 0.0 : 2.0 * c.tp / denom;
}

double mcc(std::span<const std::size_t> pred, std::span<const std::size_t> gold, std::size_t positive_class) {
  require_paired(pred, gold, 1, "mcc");
  const Confusion c = confusion(pred, gold, positive_class);
  const double denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn);
  if (denom == 0.0) return 0.0;
  return (c.tp * c.tn - c.fp * c.fn) / std::sqrt(denom);
}

double mse(std::span<const double> pred, std::span<const double> gold) {
  require_paired(pred, gold, 1, "mse");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += (pred[i] - gold[i]) * (pred[i] - gold[i]);
  return total / static_cast<double>(pred.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require_paired(x, y, 2, "pearson");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) fail(ErrorKind::degenerate_input, "pearson: zero variance input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  require_paired(x, y, 2, "spearman");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

std::optional<double> EvalReport::get(Metric metric) const {
  switch (metric) {
    case Metric::accuracy: return accuracy;
    case Metric::f1: return f1;
    case Metric::mcc: return mcc;
    case Metric::pearson: return pearson;
    case Metric::spearman: return spearman;
    case Metric::mse: return mse;
  }
  return std::nullopt;
}

std::map<std::string, double> EvalReport::values() const {
  std::map<std::string, double> out;
  for (Metric m : {Metric::accuracy, Metric::f1, Metric::mcc, Metric::pearson, Metric::spearman, Metric::mse}) {
    if (auto v = get(m)) out.emplace(std::string(to_string(m)), *v);
  }
  return out;
}

std::string EvalReport::to_key_value() const {
  std::ostringstream out;
  out.precision(17);
  out << "task=" << task << '\n' << "split=" << split << '\n' << "n_examples=" << n_examples << '\n';
  for (const auto& [k, v] : values()) out << k << '=' << v << '\n';
  return out.str();
}

EvalReport compute_report(const TaskDef& task, std::string split, std::span<const std::size_t> pred_classes,
                          std::span<const std::size_t> gold_classes, std::span<const double> gold_values) {
  require_paired(pred_classes, gold_classes, 1, "evaluate");
  EvalReport report;
  report.task = task.name;
  report.split = std::move(split);
  report.n_examples = pred_classes.size();

  std::vector<double> decoded;
  if (task.kind == TaskKind::regression) {
    require_paired(pred_classes, gold_values, 1, "evaluate");
    for (std::size_t c : pred_classes) decoded.push_back(regression_class_value(c));
  }
  for (Metric m : task.metrics) {
    switch (m) {
      case Metric::accuracy: report.accuracy = supcl::accuracy(pred_classes, gold_classes); break;
      case Metric::f1: report.f1 = supcl::f1(pred_classes, gold_classes, task.positive_class); break;
      case Metric::mcc: report.mcc = supcl::mcc(pred_classes, gold_classes, task.positive_class); break;
      case Metric::mse: report.mse = supcl::mse(decoded, gold_values); break;
      case Metric::pearson:
      case Metric::spearman:
        // Undefined for constant predictions; left absent.
        try {
          if (m == Metric::pearson) report.pearson = supcl::pearson(decoded, gold_values);
          else report.spearman = supcl::spearman(decoded, gold_values);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::degenerate_input) throw;
        }
        break;
    }
  }
  return report;
}

}  // namespace supcl
