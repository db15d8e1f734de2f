#include "supcl/contrastive.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "supcl/error.hpp"
#include "supcl/ops.hpp"

namespace supcl {

namespace {

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

std::size_t view_count(const ViewBatch& views) {
  std::size_t n = 0;
  for (std::size_t v : views.view) n = std::max(n, v + 1);
  return n;
}

// log p(j | i) over B(i) for every pair, as a [MN, MN] tensor.
Tensor pair_log_probs(const ViewBatch& views) {
  const std::size_t rows = views.rows();
  Tensor logits = scale(matmul(views.embeddings, transpose(views.embeddings)),
                        1.0 / views.temperature);
  std::vector<std::uint8_t> others(rows * rows, 1);
  for (std::size_t i = 0; i < rows; ++i) others[i * rows + i] = 0;
  return masked_log_softmax(logits, others);
}

Tensor reduce(Tensor total, std::size_t rows, Reduction reduction) {
  if (reduction == Reduction::mean) return scale(total, 1.0 / static_cast<double>(rows));
  return total;
}

}  // namespace

DropoutSchedule::DropoutSchedule(std::vector<double> probabilities)
    : probabilities_(std::move(probabilities)) {
  if (probabilities_.size() < 2) {
    fail(ErrorKind::config, "dropout schedule needs at least 2 passes, got " +
                                std::to_string(probabilities_.size()));
  }
  for (double p : probabilities_) {
    if (!(p >= 0.0 && p < 1.0)) {
      fail(ErrorKind::invalid_probability, "dropout schedule entry " + shortest(p) + " outside [0,1)");
    }
  }
}

std::string DropoutSchedule::to_string() const {
  std::string out = "[";
  for (std::size_t i = 0; i < probabilities_.size(); ++i) {
    if (i) out += ',';
    out += shortest(probabilities_[i]);
  }
  return out + "]";
}

void ViewBatch::validate() const {
  const std::size_t n_rows = rows();
  if (!embeddings.defined() || embeddings.rank() != 2 || embeddings.dim(0) != n_rows) {
    fail(ErrorKind::shape, "view batch embeddings do not match row metadata");
  }
  if (view.size() != n_rows || label.size() != n_rows) {
    fail(ErrorKind::shape, "view batch metadata lengths differ");
  }
  if (!(temperature > 0.0)) fail(ErrorKind::config, "temperature must be positive");
  const std::size_t n_views = view_count(*this);
  if (n_views == 0 || n_rows % n_views != 0) fail(ErrorKind::shape, "view batch is ragged");
  const std::size_t samples = n_rows / n_views;
  std::vector<std::size_t> seen(samples * n_views, 0);
  std::vector<std::size_t> origin_label(samples, 0);
  std::vector<bool> labelled(samples, false);
  for (std::size_t r = 0; r < n_rows; ++r) {
    if (origin[r] >= samples) fail(ErrorKind::shape, "view batch origin out of range");
    ++seen[origin[r] * n_views + view[r]];
    if (labelled[origin[r]] && origin_label[origin[r]] != label[r]) {
      fail(ErrorKind::label, "label varies across views of origin " + std::to_string(origin[r]));
    }
    labelled[origin[r]] = true;
    origin_label[origin[r]] = label[r];
  }
  for (std::size_t c : seen) {
    if (c != 1) fail(ErrorKind::shape, "each origin must appear exactly once per view");
  }
  const std::size_t d = embeddings.dim(1);
  auto data = embeddings.data();
  for (std::size_t r = 0; r < n_rows; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += data[r * d + j] * data[r * d + j];
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-9) {
      fail(ErrorKind::degenerate_embedding, "view batch row " + std::to_string(r) + " is not unit norm");
    }
  }
}

ViewBatch build_views(const EncoderWeights& weights, const TokenBatch& batch,
                      const DropoutSchedule& schedule, const RngStream& rng,
                      double temperature, bool training) {
  if (schedule.views() < 2) fail(ErrorKind::config, "build_views: schedule needs >= 2 passes");
  if (batch.labels.size() != batch.rows) {
    fail(ErrorKind::shape, "build_views: batch has " + std::to_string(batch.labels.size()) +
                               " labels for " + std::to_string(batch.rows) + " rows");
  }
  ViewBatch out;
  out.temperature = temperature;
  std::vector<Tensor> passes;
  passes.reserve(schedule.views());
  for (std::size_t n = 0; n < schedule.views(); ++n) {
    passes.push_back(encode(weights, batch, schedule[n], rng.derive(n), training));
    for (std::size_t m = 0; m < batch.rows; ++m) {
      out.origin.push_back(m);
      out.view.push_back(n);
      out.label.push_back(batch.labels[m]);
    }
  }
  out.embeddings = concat_rows(passes);
  return out;
}

PairIndex build_pair_index(const ViewBatch& views, bool supervised) {
  views.validate();
  const std::size_t rows = views.rows();
  PairIndex index;
  index.negatives.resize(rows);
  index.positives.resize(rows);
  index.same_origin.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t b = 0; b < rows; ++b) {
      if (b == i) continue;
      index.negatives[i].push_back(b);
      if (views.label[b] == views.label[i]) index.positives[i].push_back(b);
      if (views.origin[b] == views.origin[i]) index.same_origin[i].push_back(b);
    }
    if (supervised && index.positives[i].empty()) {
      fail(ErrorKind::empty_positive_set,
           "anchor " + std::to_string(i) + " (origin " + std::to_string(views.origin[i]) +
               ", label " + std::to_string(views.label[i]) + ") has no positives");
    }
  }
  return index;
}

Tensor self_sup_loss(const ViewBatch& views, const PairIndex& index, Reduction reduction) {
  const std::size_t rows = views.rows();
  const std::size_t n_views = view_count(views);
  if (n_views != 2) {
    fail(ErrorKind::unsupported_view_count,
         "self-supervised loss needs exactly 2 views, got " + std::to_string(n_views));
  }
  if (rows / n_views < 2) {
    fail(ErrorKind::degenerate_input, "self-supervised loss needs at least 2 samples per batch");
  }
  std::vector<double> weights(rows * rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    if (index.same_origin.at(i).size() != 1) {
      fail(ErrorKind::shape, "anchor " + std::to_string(i) + " lacks a single paired view");
    }
    weights[i * rows + index.same_origin[i][0]] = -1.0;
  }
  return reduce(weighted_sum(pair_log_probs(views), weights), rows, reduction);
}

Tensor sup_loss(const ViewBatch& views, const PairIndex& index, Reduction reduction) {
  const std::size_t rows = views.rows();
  if (index.positives.size() != rows) fail(ErrorKind::shape, "pair index does not match views");
  std::vector<double> weights(rows * rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto& pos = index.positives[i];
    if (pos.empty()) {
      fail(ErrorKind::empty_positive_set,
           "anchor " + std::to_string(i) + " (origin " + std::to_string(views.origin[i]) +
               ", label " + std::to_string(views.label[i]) + ") has no positives");
    }
    const double w = -1.0 / static_cast<double>(pos.size());
    for (std::size_t p : pos) weights[i * rows + p] = w;
  }
  return reduce(weighted_sum(pair_log_probs(views), weights), rows, reduction);
}

}  // namespace supcl
