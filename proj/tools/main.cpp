#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace supcl::cli;

  CLI::App app{"Supervised contrastive learning for sequence classification"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train per the config, then evaluate on dev/test");
  train_cmd->add_option("-c,--config", train.config, "Run config (JSON)")->required();
  train_cmd->add_option("--set", train.overrides, "Override a config key, e.g. train.temperature=0.2");

  GridArgs grid;
  auto* grid_cmd = app.add_subcommand("grid", "Grid search over dropout schedules and learning rates");
  grid_cmd->add_option("-c,--config", grid.config, "Base run config (JSON)")->required();
  grid_cmd->add_option("-g,--grid", grid.grid, "Grid spec (JSON)")->required();
  grid_cmd->add_option("--set", grid.overrides, "Override a config key");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a TSV split");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint.bin from a train run")->required();
  eval_cmd->add_option("--data", eval.data, "TSV file with a header row")->required();
  eval_cmd->add_option("--split", eval.split, "Split name recorded in the report");
  eval_cmd->add_option("--output", eval.output, "Also write the report as JSON");

  GradcheckArgs gradcheck;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck_cmd->add_option("--scope", gradcheck.scope, "losses, encoder or all");
  gradcheck_cmd->add_option("--seed", gradcheck.seed, "Seed for the random inputs");

  MakeDataArgs make_data;
  auto* make_data_cmd = app.add_subcommand("make-data", "Write a synthetic task as train/dev/test TSV");
  make_data_cmd->add_option("--kind", make_data.kind, "separable_keywords, parity or pair_overlap")->required();
  make_data_cmd->add_option("-n", make_data.n, "Number of examples before splitting");
  make_data_cmd->add_option("--seed", make_data.seed, "Generator seed");
  make_data_cmd->add_option("--out", make_data.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "CONFIG: " << e.what() << '\n';
    return 2;
  }

  if (*train_cmd) return cmd_train(train, std::cout, std::cerr);
  if (*grid_cmd) return cmd_grid(grid, std::cout, std::cerr);
  if (*eval_cmd) return cmd_eval(eval, std::cout, std::cerr);
  if (*gradcheck_cmd) return cmd_gradcheck(gradcheck, std::cout, std::cerr);
  return cmd_make_data(make_data, std::cout, std::cerr);
}
