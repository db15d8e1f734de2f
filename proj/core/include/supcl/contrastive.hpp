#pragma once

#include <cstddef>
#include <vector>

#include "supcl/encoder.hpp"
#include "supcl/rng.hpp"
#include "supcl/tensor.hpp"

namespace supcl {

// Ordered dropout probabilities, one per forward pass; pass 0 is the anchor.
class DropoutSchedule {
 public:
  DropoutSchedule() = default;
  explicit DropoutSchedule(std::vector<double> probabilities);

  const std::vector<double>& probabilities() const { return probabilities_; }
  std::size_t views() const { return probabilities_.size(); }
  double operator[](std::size_t n) const { return probabilities_.at(n); }

  // "[0.0,0.1,0.2]"; each value printed in its shortest round-trip form.
  std::string to_string() const;

  friend bool operator==(const DropoutSchedule&, const DropoutSchedule&) = default;

 private:
  std::vector<double> probabilities_;
};

enum class Reduction { sum, mean };

// The M*N embeddings of one augmented batch. Rows are grouped by pass:
// row n*M + m is sample m under dropout pass n.
struct ViewBatch {
  Tensor embeddings;  // [M*N, d]
  std::vector<std::size_t> origin;
  std::vector<std::size_t> view;
  std::vector<std::size_t> label;
  double temperature = 0.05;

  std::size_t rows() const { return origin.size(); }
  void validate() const;
};

// B(i): every index but i. P(i): members of B(i) with i's label.
// J(i): members of B(i) with i's origin.
struct PairIndex {
  std::vector<std::vector<std::size_t>> negatives;
  std::vector<std::vector<std::size_t>> positives;
  std::vector<std::vector<std::size_t>> same_origin;
};

ViewBatch build_views(const EncoderWeights& weights, const TokenBatch& batch,
                      const DropoutSchedule& schedule, const RngStream& rng,
                      double temperature, bool training = true);

// With `supervised`, an anchor whose P(i) is empty is an error.
PairIndex build_pair_index(const ViewBatch& views, bool supervised = false);

// Each anchor's single positive is its own other view; requires N == 2, M >= 2.
Tensor self_sup_loss(const ViewBatch& views, const PairIndex& index,
                     Reduction reduction = Reduction::sum);

// Each anchor averages log-likelihood over every same-label row.
Tensor sup_loss(const ViewBatch& views, const PairIndex& index,
                Reduction reduction = Reduction::sum);

}  // namespace supcl
