// One PASS/FAIL line per acceptance criterion; exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "gradcheck_suite.hpp"
#include "oracles.hpp"
#include "run_config.hpp"
#include "supcl/contrastive.hpp"
#include "supcl/metrics.hpp"
#include "supcl/pipeline.hpp"
#include "supcl/serialization.hpp"

using namespace supcl;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigDir = SUPCL_CONFIG_DIR;

struct Verdict {
  bool pass = true;
  std::string detail;
  std::string failure;  // first failed requirement

  void require(bool ok, const std::string& what) {
    if (!ok && pass) failure = what;
    pass = pass && ok;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

ViewBatch views_of(const oracle::Mat& z, std::size_t m, std::size_t n, const std::vector<std::size_t>& labels,
                   double tau) {
  ViewBatch v;
  std::vector<double> flat;
  for (const auto& r : z) flat.insert(flat.end(), r.begin(), r.end());
  v.embeddings = Tensor({m * n, z[0].size()}, flat);
  v.temperature = tau;
  for (std::size_t i = 0; i < m * n; ++i) {
    v.origin.push_back(i % m);
    v.view.push_back(i / m);
    v.label.push_back(labels[i % m]);
  }
  return v;
}

double sup(const ViewBatch& v) { return sup_loss(v, build_pair_index(v, true)).item(); }
double selfsup(const ViewBatch& v) { return self_sup_loss(v, build_pair_index(v)).item(); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("supcl_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string run_dir_line(const std::string& out) {
  const auto start = out.find("run_dir=") + 8;
  return out.substr(start, out.find('\n', start) - start);
}

Verdict gradients() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  double worst_loss = 0.0, worst_encoder = 0.0;
  std::size_t checks = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (const auto& e : cli::run_gradcheck_suite(cli::GradScope::all, seed)) {
      ++checks;
      v.require(e.ok(), e.result.name + " max_rel_err " + std::to_string(e.result.max_relative_error));
      double& worst = e.tolerance == cli::kLossTolerance ? worst_loss : worst_encoder;
      worst = std::max(worst, e.result.max_relative_error);
    }
  }
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime " + std::to_string(secs) + " s");
  v.detail += fmt("%.0f checks, worst loss %.2e (tol 1e-5), worst encoder %.2e (tol 1e-4)", double(checks),
                  worst_loss, worst_encoder) +
              fmt(", %.1f s", secs);
  return v;
}

Verdict analytic_losses() {
  Verdict v;
  const oracle::Mat same(4, oracle::unit({0.3, -1.0, 2.0}));
  const ViewBatch collapsed = views_of(same, 2, 2, {0, 1}, 0.05);
  const double e1 = std::abs(sup(collapsed) - 4.0 * std::log(3.0));
  const double e2 = std::abs(selfsup(collapsed) - 4.0 * std::log(3.0));
  v.require(e1 <= 1e-9 && e2 <= 1e-9, "identical-embedding case off 4 ln 3");

  oracle::Gen gen(42);
  oracle::Mat z;
  for (int i = 0; i < 8; ++i) z.push_back(oracle::unit(gen.normals(5)));
  const std::vector<std::size_t> labels = {0, 1, 0, 1};
  const ViewBatch labelled = views_of(z, 4, 2, labels, 0.1);
  std::vector<std::size_t> row_labels;
  for (std::size_t i = 0; i < 8; ++i) row_labels.push_back(labels[i % 4]);
  const double e3 = std::abs(sup(labelled) - oracle::sup_loss(z, row_labels, 0.1));
  v.require(e3 <= 1e-10, "M=4 labelled case differs from oracle");
  v.detail += fmt("|sup-4ln3|=%.1e |self-4ln3|=%.1e |sup-oracle|=%.1e", e1, e2, e3);
  return v;
}

Verdict reduction_identity() {
  Verdict v;
  oracle::Gen gen(7);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + gen.index(7), d = 2 + gen.index(15);
    oracle::Mat z;
    for (std::size_t i = 0; i < 2 * m; ++i) z.push_back(oracle::unit(gen.normals(d)));
    std::vector<std::size_t> labels(m);
    std::iota(labels.begin(), labels.end(), 0);
    const ViewBatch b = views_of(z, m, 2, labels, gen.uniform(0.05, 0.5));
    worst = std::max(worst, std::abs(sup(b) - selfsup(b)));
  }
  v.require(worst <= 1e-12, "sup and self-sup differ");
  v.detail += fmt("100 batches, max |sup - selfsup| = %.1e", worst);
  return v;
}

Verdict determinism() {
  Verdict v;
  const fs::path out = scratch("determinism");
  const fs::path cfg = kConfigDir / "separable_keywords.json";
  const std::vector<std::string> overrides = {"paths.output_dir=\"" + out.string() + "\""};
  std::ostringstream o1, o2, err;
  const int c1 = cli::cmd_train({cfg, overrides}, o1, err);
  const int c2 = cli::cmd_train({cfg, overrides}, o2, err);
  v.require(c1 == 0 && c2 == 0, "train failed: " + err.str());
  if (!v.pass) return v;
  const fs::path a = run_dir_line(o1.str()), b = run_dir_line(o2.str());
  const std::string log_a = read_file(a / "runlog.jsonl"), log_b = read_file(b / "runlog.jsonl");
  v.require(log_a == log_b, "runlog.jsonl differs");
  v.require(runlog_from_jsonl(log_a) == runlog_from_jsonl(log_b), "RunLog differs");
  v.require(read_file(a / "report.json") == read_file(b / "report.json"), "report.json differs");
  v.require(read_file(a / "checkpoint.bin") == read_file(b / "checkpoint.bin"), "checkpoint differs");
  const std::size_t records = runlog_from_jsonl(log_a).records.size();
  v.detail += "two cmd_train runs: runlog.jsonl, report.json, checkpoint.bin byte-identical (" +
              std::to_string(records) + " records)";
  fs::remove_all(out);
  return v;
}

struct ParityMeans {
  double supcl = 0.0, selfsup = 0.0, dropaug = 0.0;
  double supcl_selfsup_seconds = 0.0;
  std::string per_seed;
};

ParityMeans parity_runs() {
  ParityMeans r;
  constexpr std::uint64_t kSeeds = 5;
  const fs::path cfg = kConfigDir / "parity.json";
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    std::string line = "seed " + std::to_string(seed) + ":";
    for (const char* mode : {"supcl", "selfsup_cl", "dropout_augmented_ce"}) {
      const auto t0 = std::chrono::steady_clock::now();
      const cli::RunConfig c =
          cli::read_run_config(cfg, {std::string("train.mode=") + mode, "train.seed=" + std::to_string(seed)});
      const TaskData data = cli::load_task_data(c);
      const double acc = run_experiment(c.train, data, c.encoder).dev.accuracy.value();
      const std::string m = mode;
      if (m == "supcl") r.supcl += acc / kSeeds;
      if (m == "selfsup_cl") r.selfsup += acc / kSeeds;
      if (m == "dropout_augmented_ce") r.dropaug += acc / kSeeds;
      if (m != "dropout_augmented_ce") r.supcl_selfsup_seconds += seconds_since(t0);
      line += " " + m + "=" + fmt("%.3f", acc);
    }
    r.per_seed += "    " + line + "\n";
  }
  return r;
}

Verdict parity_vs_selfsup(const ParityMeans& p) {
  Verdict v;
  v.require(p.supcl >= p.selfsup, "supcl mean below selfsup mean");
  v.require(p.supcl >= 0.90, "supcl mean below 0.90");
  v.require(p.supcl_selfsup_seconds < 600.0, "runtime over 10 min");
  v.detail += fmt("parity dev accuracy over 5 seeds: supcl %.3f, selfsup_cl %.3f (%.0f s)", p.supcl, p.selfsup,
                  p.supcl_selfsup_seconds);
  return v;
}

Verdict parity_vs_dropaug(const ParityMeans& p) {
  Verdict v;
  v.require(p.supcl >= p.dropaug, "supcl mean below dropout_augmented_ce mean");
  v.detail += fmt("parity dev accuracy over 5 seeds: supcl %.3f, dropout_augmented_ce %.3f", p.supcl, p.dropaug);
  return v;
}

Verdict metric_oracles() {
  Verdict v;
  oracle::Gen gen(11);
  double worst = 0.0;
  auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + gen.index(50);
    const auto p = gen.labels(n, 2), g = gen.labels(n, 2);
    track(accuracy(p, g), oracle::accuracy(p, g));
    track(f1(p, g), oracle::f1(p, g));
    track(mcc(p, g), oracle::mcc(p, g));
    oracle::Vec x = gen.normals(n), y = gen.normals(n);
    if (trial % 2 == 0) {
      for (double& t : x) t = std::round(2.0 * t);  // ties
      for (double& t : y) t = std::round(2.0 * t);
    }
    track(mse(x, y), oracle::mse(x, y));
    const bool varies = std::any_of(x.begin(), x.end(), [&](double t) { return t != x[0]; }) &&
                        std::any_of(y.begin(), y.end(), [&](double t) { return t != y[0]; });
    if (varies) {
      track(pearson(x, y), oracle::pearson(x, y));
      track(spearman(x, y), oracle::spearman(x, y));
    }
  }
  v.require(worst <= 1e-12, "metric differs from oracle");

  const std::vector<std::size_t> gold = {0, 1, 1, 0, 1}, none = {0, 0, 0, 0, 0};
  const oracle::Vec a = {0.5, 1.5, 1.5, 4.0}, b = {1.0, 2.0, 3.0, 4.0};
  v.require(accuracy(gold, gold) == 1.0 && f1(gold, gold) == 1.0 && mcc(gold, gold) == 1.0,
            "perfect classification is not 1");
  v.require(pearson(b, b) == 1.0 && spearman(a, a) == 1.0 && mse(a, a) == 0.0, "perfect regression convention");
  v.require(f1(none, gold) == 0.0 && f1(none, none) == 0.0, "f1 zero-denominator convention");
  v.require(mcc(none, gold) == 0.0 && mcc(gold, none) == 0.0, "mcc zero-denominator convention");
  v.detail += fmt("6 metrics x 100 instances, max |lib - oracle| = %.1e; conventions exact", worst);
  return v;
}

Verdict stsb_rounding() {
  Verdict v;
  oracle::Gen gen(13);
  std::vector<Example> raw;
  for (int i = 0; i < 1000; ++i) raw.push_back(Example{"a", "b", gen.uniform(0.0, 5.0), 0});
  const auto rounded = round_regression_labels(raw, builtin_task("stsb"));
  std::size_t mismatches = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto expected = static_cast<std::size_t>(std::floor(10.0 * raw[i].raw_label + 0.5));
    mismatches += rounded[i].class_id != expected;
    worst = std::max(worst, std::abs(regression_class_value(rounded[i].class_id) - raw[i].raw_label));
  }
  v.require(mismatches == 0, std::to_string(mismatches) + " class ids differ from oracle");
  v.require(worst <= 0.05 + 1e-12, "midpoint decode error above 0.05");
  v.detail += fmt("1000 labels, %.0f mismatches, max decode error %.4f", double(mismatches), worst);
  return v;
}

Verdict grid_table() {
  Verdict v;
  const fs::path out = scratch("grid");
  const fs::path cfg = kConfigDir / "separable_keywords.json";
  const fs::path grid = kConfigDir / "schedule_grid.json";
  const std::vector<std::string> overrides = {"paths.output_dir=\"" + out.string() + "\""};
  std::ostringstream o1, o2, err;
  const int c1 = cli::cmd_grid({cfg, grid, overrides}, o1, err);
  const int c2 = cli::cmd_grid({cfg, grid, overrides}, o2, err);
  v.require(c1 == 0 && c2 == 0, "grid failed: " + err.str());
  if (!v.pass) return v;
  const std::string t1 = read_file(fs::path(run_dir_line(o1.str())) / "grid.tsv");
  const std::string t2 = read_file(fs::path(run_dir_line(o2.str())) / "grid.tsv");
  v.require(t1 == t2, "grid tables differ between runs");

  const std::size_t m = cli::read_run_config(cfg).train.batch_size;
  std::istringstream in(t1);
  std::string line;
  std::getline(in, line);
  v.require(line == "rank\tschedule\tlearning_rate\tviews\tbatch_rows\tmetric\tdev_metric\tstatus", "header");
  std::vector<std::string> seen;
  double previous = 2.0;
  std::size_t rank = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::istringstream fields(line);
    for (std::string s; std::getline(fields, s, '\t');) f.push_back(s);
    v.require(f.size() == 8, "row has " + std::to_string(f.size()) + " fields");
    if (f.size() != 8) break;
    v.require(f[0] == std::to_string(++rank), "rank column");
    const std::size_t views = std::stoul(f[3]);
    v.require(std::stoul(f[4]) == m * views, "batch_rows is not M*N");
    v.require(static_cast<std::size_t>(std::count(f[1].begin(), f[1].end(), ',')) + 1 == views, "views column");
    const double metric = std::stod(f[6]);
    v.require(metric <= previous, "rows not sorted by dev metric");
    v.require(f[5] == "accuracy" && f[7] == "ok", "metric/status column");
    previous = metric;
    seen.push_back(f[1]);
  }
  std::sort(seen.begin(), seen.end());
  const std::vector<std::string> expected = {"[0.0,0.1,0.2,0.3]", "[0.0,0.1,0.2]", "[0.0,0.1]", "[0.1,0.1]"};
  v.require(seen == expected, "schedules not echoed one per row");
  v.detail += "4 ranked rows; schedules echoed; batch_rows = M*N; identical across two runs";
  fs::remove_all(out);
  return v;
}

Verdict embedding_invariants() {
  Verdict v;
  const TaskData data = prepare_task(builtin_task("separable_keywords"),
                                     make_synthetic(SyntheticKind::separable_keywords, 200, 3), 16);
  EncoderConfig config;
  config.vocab_size = data.vocab.size();
  const EncoderWeights w = init_weights(config, 3);
  oracle::Gen gen(17);
  double worst_norm = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> probs = {0.0};
    const std::size_t n = 2 + gen.index(3);
    while (probs.size() < n) probs.push_back(gen.uniform(0.0, 0.5));
    const auto batches = sample_batches(data.train.size(), 8, RngStream{static_cast<std::uint64_t>(trial), 1});
    const ViewBatch views = build_views(w, make_batch(data.train, batches[0]), DropoutSchedule(probs),
                                        RngStream{static_cast<std::uint64_t>(trial), 2}, 0.1, true);
    const std::size_t d = views.embeddings.dim(1);
    for (std::size_t r = 0; r < views.rows(); ++r) {
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) sq += views.embeddings.data()[r * d + j] * views.embeddings.data()[r * d + j];
      worst_norm = std::max(worst_norm, std::abs(std::sqrt(sq) - 1.0));
    }
  }
  v.require(worst_norm <= 1e-9, "row norm deviates from 1");

  TrainSpec spec = recommended_spec("separable_keywords");
  spec.stage_a_epochs = 2;
  const EncoderRun stage_a = train_supcl(spec, data.train, w);
  const std::uint64_t before = stage_a.weights.checksum();
  train_probe(stage_a.weights, spec, data);
  v.require(stage_a.weights.checksum() == before, "stage B changed the encoder checksum");

  const ViewBatch zero = build_views(w, make_batch(data.train, std::vector<std::size_t>{0, 1, 2, 3}),
                                     DropoutSchedule({0.0, 0.0}), RngStream{5, 5}, 0.1, true);
  const auto e = zero.embeddings.data();
  bool equal = true;
  for (std::size_t i = 0; i < e.size() / 2; ++i) equal = equal && e[i] == e[e.size() / 2 + i];
  v.require(equal, "[0.0,0.0] views are not bitwise equal");
  v.detail += fmt("max | ||row|| - 1 | = %.1e; stage B checksum unchanged; [0.0,0.0] views bitwise equal", worst_norm);
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> check;
  };
  ParityMeans parity;
  bool parity_done = false;
  auto parity_once = [&]() -> const ParityMeans& {
    if (!parity_done) {
      parity = parity_runs();
      parity_done = true;
    }
    return parity;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradients},
      {2, "analytic loss values", analytic_losses},
      {3, "reduction identity", reduction_identity},
      {4, "end-to-end determinism", determinism},
      {5, "parity: supcl vs selfsup_cl", [&] { return parity_vs_selfsup(parity_once()); }},
      {6, "parity: supcl vs dropout_augmented_ce", [&] { return parity_vs_dropaug(parity_once()); }},
      {7, "metric oracles", metric_oracles},
      {8, "regression label rounding", stsb_rounding},
      {9, "grid table shape", grid_table},
      {10, "embedding invariants", embedding_invariants},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v.pass = false;
      v.failure = std::string("exception: ") + e.what();
    }
    failed += v.pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s%s%s\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(),
                v.pass ? "" : " -- ", v.failure.c_str());
    if (c.id == 6) std::printf("%s", parity.per_seed.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
