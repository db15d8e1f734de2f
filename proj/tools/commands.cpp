#include "commands.hpp"

#include <charconv>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "gradcheck_suite.hpp"
#include "json.hpp"
#include "run_config.hpp"
#include "supcl/error.hpp"
#include "supcl/serialization.hpp"

namespace supcl::cli {

namespace {

std::string one_line(std::string text) {
  for (char& c : text) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return text;
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void report_error(std::ostream& err, ErrorCategory category, const std::string& detail) {
  err << to_string(category) << ": " << one_line(detail) << '\n';
}

std::string grid_table(const std::vector<GridCell>& cells) {
  std::ostringstream t;
  t << "rank\tschedule\tlearning_rate\tviews\tbatch_rows\tmetric\tdev_metric\tstatus\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const GridCell& c = cells[i];
    t << (i + 1) << '\t' << c.spec.schedule.to_string() << '\t' << shortest(c.spec.learning_rate) << '\t'
      << c.spec.schedule.views() << '\t' << c.batch_rows() << '\t' << c.metric_name << '\t'
      << (c.dev_metric ? shortest(*c.dev_metric) : "-") << '\t'
      << (c.ok() ? std::string("ok") : "failed: " + one_line(c.error)) << '\n';
  }
  return t.str();
}

}  // namespace

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const Error& e) {
    report_error(err, e.category(), std::string(to_string(e.kind())) + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    report_error(err, ErrorCategory::config, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    report_error(err, ErrorCategory::io, e.what());
  } catch (const std::exception& e) {
    report_error(err, ErrorCategory::numeric, std::string("unexpected: ") + e.what());
  }
  return 1;
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig config = read_run_config(args.config, args.overrides);
    const TaskData data = load_task_data(config);
    const ExperimentResult result = run_experiment(config.train, data, config.encoder);

    const auto dir = fresh_run_dir(output_root(config), "train");
    save_checkpoint(dir / "checkpoint.bin", Checkpoint{result.weights, result.head, data.vocab, config.task, data.max_len});
    write_file(dir / "runlog.jsonl", runlog_to_jsonl(result.log));
    write_file(dir / "timing.jsonl", timing_to_jsonl(result.log));
    write_file(dir / "report.json", summary_to_json(result));
    write_file(dir / "effective_config.json", to_json(config));

    out << "run_dir=" << dir.string() << '\n' << result.dev.to_key_value();
    if (result.test) out << result.test->to_key_value();
    return 0;
  });
}

int cmd_grid(const GridArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig config = read_run_config(args.config, args.overrides);
    GridFile grid = load_grid(read_file(args.grid));
    if (grid.grid.learning_rates.empty()) grid.grid.learning_rates = {config.train.learning_rate};
    const TaskData data = load_task_data(config);
    const auto cells = grid_search(config.train, grid.grid, data, config.encoder, grid.jobs);

    const auto dir = fresh_run_dir(output_root(config), "grid");
    const std::string table = grid_table(cells);
    write_file(dir / "grid.tsv", table);
    write_file(dir / "effective_config.json", to_json(config));
    out << "run_dir=" << dir.string() << '\n' << table;

    std::size_t failed = 0;
    const GridCell* first = nullptr;
    for (const GridCell& c : cells) {
      if (c.ok()) continue;
      ++failed;
      if (!first) first = &c;
    }
    if (failed == 0) return 0;
    report_error(err, first->error_category,
                 std::to_string(failed) + " of " + std::to_string(cells.size()) + " grid cells failed; first: " +
                     first->spec.schedule.to_string() + " lr=" + shortest(first->spec.learning_rate) + ": " +
                     first->error);
    return 1;
  });
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint ck = load_checkpoint(args.checkpoint);
    if (!ck.head) fail(ErrorKind::config, "checkpoint has no classifier head");
    const TaskDef& task = builtin_task(ck.task);
    std::vector<Example> examples = load_tsv(args.data, task);
    if (examples.empty()) fail(ErrorKind::empty_input, "no examples in " + args.data.string());
    if (task.kind == TaskKind::regression) examples = round_regression_labels(examples, task);
    const EncodedSplit split = encode_split(examples, ck.vocab, ck.max_len);
    const EvalReport report = evaluate(ck.encoder, *ck.head, split, task, args.split);
    if (args.output) write_file(*args.output, report_to_json(report));
    out << report.to_key_value();
    return 0;
  });
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto entries = run_gradcheck_suite(grad_scope_from_string(args.scope), args.seed);
    std::size_t failed = 0;
    for (const SuiteEntry& e : entries) {
      out << (e.ok() ? "PASS " : "FAIL ") << e.result.name << " max_rel_err=" << e.result.max_relative_error
          << " tol=" << e.tolerance << '\n';
      if (!e.ok()) ++failed;
    }
    if (failed == 0) return 0;
    report_error(err, ErrorCategory::numeric,
                 std::to_string(failed) + " of " + std::to_string(entries.size()) + " gradient checks failed");
    return 1;
  });
}

int cmd_make_data(const MakeDataArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const SyntheticKind kind = synthetic_kind_from_string(args.kind);
    const TaskDef& task = builtin_task(to_string(kind));
    if (args.out.empty()) fail(ErrorKind::config, "make-data needs an output directory");
    const Splits splits = make_synthetic(kind, args.n, args.seed);
    std::error_code ec;
    std::filesystem::create_directories(args.out, ec);
    if (ec) fail(ErrorKind::io, "cannot create " + args.out.string() + ": " + ec.message());
    write_tsv(args.out / "train.tsv", splits.train, task);
    write_tsv(args.out / "dev.tsv", splits.dev, task);
    write_tsv(args.out / "test.tsv", splits.test, task);
    out << "wrote " << splits.train.size() << '/' << splits.dev.size() << '/' << splits.test.size()
        << " train/dev/test examples to " << args.out.string() << '\n';
    return 0;
  });
}

}  // namespace supcl::cli
