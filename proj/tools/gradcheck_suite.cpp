#include "gradcheck_suite.hpp"

#include <string>

#include "supcl/contrastive.hpp"
#include "supcl/encoder.hpp"
#include "supcl/error.hpp"
#include "supcl/ops.hpp"
#include "supcl/rng.hpp"

namespace supcl::cli {

namespace {

struct Random {
  std::mt19937_64 engine;

  explicit Random(std::uint64_t seed) : engine(RngStream{seed, 0x6c}.engine()) {}

  std::vector<double> normal(std::size_t n, double std = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = std * standard_normal(engine);
    return v;
  }
  Tensor leaf(Shape shape, double std = 1.0) {
    const std::size_t n = numel(shape);
    return Tensor(std::move(shape), normal(n, std), true);
  }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform01(engine) * static_cast<double>(n)); }
};

// Projects a non-scalar output onto fixed random weights.
Tensor project(const Tensor& out, const std::vector<double>& w) { return weighted_sum(out, w); }

ViewBatch views_from(const Tensor& raw, std::size_t m, std::size_t n, const std::vector<std::size_t>& labels,
                     double temperature) {
  ViewBatch v;
  v.embeddings = l2_normalize(raw);
  v.temperature = temperature;
  for (std::size_t pass = 0; pass < n; ++pass) {
    for (std::size_t s = 0; s < m; ++s) {
      v.origin.push_back(s);
      v.view.push_back(pass);
      v.label.push_back(labels[s]);
    }
  }
  return v;
}

void add(std::vector<SuiteEntry>& out, GradCheckResult r, double tol) { out.push_back({std::move(r), tol}); }

void loss_suite(std::vector<SuiteEntry>& out, std::uint64_t seed) {
  Random rng(seed);
  {
    Tensor a = rng.leaf({4, 3}), b = rng.leaf({3, 5});
    const auto w = rng.normal(20);
    add(out, check_gradients("matmul", [&] { return project(matmul(a, b), w); }, {a, b}), kLossTolerance);
  }
  {
    Tensor x = rng.leaf({3, 4});
    const auto w = rng.normal(12);
    add(out, check_gradients("l2_normalize", [&] { return project(l2_normalize(x), w); }, {x}), kLossTolerance);
  }
  {
    Tensor x = rng.leaf({3, 4});
    const std::vector<std::uint8_t> include = {0, 1, 1, 1, 1, 0, 1, 0, 1, 1, 1, 0};
    const auto w = rng.normal(12);
    add(out, check_gradients("masked_log_softmax", [&] { return project(masked_log_softmax(x, include), w); }, {x}),
        kLossTolerance);
  }
  {
    Tensor x = rng.leaf({3, 4});
    const std::vector<std::size_t> labels = {2, 0, 3};
    add(out, check_gradients("cross_entropy", [&] { return cross_entropy(x, labels); }, {x}), kLossTolerance);
  }

  // Random shapes M in 2..4, N in 2..3, d in 2..8; self_sup needs N == 2.
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t m = 2 + rng.index(3), n = 2 + rng.index(2), d = 2 + rng.index(7);
    std::vector<std::size_t> labels(m);
    for (auto& l : labels) l = rng.index(2);
    const double tau = 0.05 + 0.45 * uniform01(rng.engine);
    Tensor raw = rng.leaf({m * n, d});
    const std::string shape = "[M=" + std::to_string(m) + ",N=" + std::to_string(n) + ",d=" + std::to_string(d) + "]";
    add(out,
        check_gradients("sup_loss" + shape,
                        [&] {
                          const ViewBatch v = views_from(raw, m, n, labels, tau);
                          return sup_loss(v, build_pair_index(v, true));
                        },
                        {raw}),
        kLossTolerance);
    Tensor pair = rng.leaf({m * 2, d});
    add(out,
        check_gradients("self_sup_loss[M=" + std::to_string(m) + ",N=2,d=" + std::to_string(d) + "]",
                        [&] {
                          const ViewBatch v = views_from(pair, m, 2, labels, tau);
                          return self_sup_loss(v, build_pair_index(v));
                        },
                        {pair}),
        kLossTolerance);
  }
}

void encoder_suite(std::vector<SuiteEntry>& out, std::uint64_t seed) {
  Random rng(seed + 1);
  {
    Tensor x = rng.leaf({6});
    const auto w = rng.normal(6);
    add(out, check_gradients("gelu", [&] { return project(gelu(x), w); }, {x}), kEncoderTolerance);
  }
  {
    Tensor x = rng.leaf({3, 5}), g = rng.leaf({5}), b = rng.leaf({5});
    const auto w = rng.normal(15);
    add(out, check_gradients("layernorm", [&] { return project(layernorm(x, g, b), w); }, {x, g, b}),
        kEncoderTolerance);
  }
  {
    Tensor x = rng.leaf({2, 3, 4});
    const auto w = rng.normal(24);
    add(out, check_gradients("softmax", [&] { return project(softmax(x, 2), w); }, {x}), kEncoderTolerance);
  }
  {
    Tensor a = rng.leaf({2, 3, 4}), b = rng.leaf({2, 5, 4});
    const auto w = rng.normal(30);
    add(out, check_gradients("bmm", [&] { return project(bmm(a, b, true), w); }, {a, b}), kEncoderTolerance);
  }
  {
    Tensor x = rng.leaf({4, 6});
    const auto w = rng.normal(24);
    const RngStream mask{seed, 0xd0};
    add(out, check_gradients("dropout", [&] { return project(dropout(x, 0.3, mask, true), w); }, {x}),
        kEncoderTolerance);
  }
  {
    Tensor t = rng.leaf({5, 3});
    const std::vector<std::size_t> idx = {4, 0, 4, 2};
    const auto w = rng.normal(12);
    add(out, check_gradients("gather_rows", [&] { return project(gather_rows(t, idx), w); }, {t}),
        kEncoderTolerance);
  }

  EncoderConfig config;
  config.vocab_size = 12;
  config.max_seq_len = 8;
  config.d_model = 8;
  config.n_heads = 2;
  config.n_layers = 2;
  config.d_ff = 16;
  EncoderWeights weights = init_weights(config, seed);
  // Larger than the 0.02 init so every layer contributes measurably.
  for (NamedTensor& p : weights.named_parameters()) {
    const bool gain = p.name.find("gain") != std::string::npos;
    auto values = p.tensor.mutable_data();
    for (double& v : values) v = (gain ? 1.0 : 0.0) + (gain ? 0.1 : 0.3) * standard_normal(rng.engine);
  }
  TokenBatch batch;
  batch.rows = 3;
  batch.seq_len = 5;
  batch.token_ids = {1, 4, 5, 6, 2, 1, 7, 8, 2, 0, 1, 3, 9, 11, 2};
  batch.attention_mask = {1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 1, 1, 1, 1, 1};
  batch.labels = {0, 1, 0};
  const DropoutSchedule schedule({0.0, 0.0});
  for (const NamedTensor& p : weights.named_parameters()) {
    add(out,
        check_gradients("encoder+sup_loss/" + p.name,
                        [&] {
                          const ViewBatch v = build_views(weights, batch, schedule, RngStream{seed, 1}, 0.1, true);
                          return sup_loss(v, build_pair_index(v, true));
                        },
                        {p.tensor}),
        kEncoderTolerance);
  }
}

}  // namespace

GradScope grad_scope_from_string(std::string_view name) {
  if (name == "losses") return GradScope::losses;
  if (name == "encoder") return GradScope::encoder;
  if (name == "all") return GradScope::all;
  fail(ErrorKind::config, "unknown gradcheck scope '" + std::string(name) + "' (expected losses, encoder or all)");
}

std::vector<SuiteEntry> run_gradcheck_suite(GradScope scope, std::uint64_t seed) {
  std::vector<SuiteEntry> out;
  if (scope != GradScope::encoder) loss_suite(out, seed);
  if (scope != GradScope::losses) encoder_suite(out, seed);
  return out;
}

}  // namespace supcl::cli
