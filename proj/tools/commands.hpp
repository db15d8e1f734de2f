#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace supcl::cli {

struct TrainArgs {
  std::filesystem::path config;
  std::vector<std::string> overrides;
};

struct GridArgs {
  std::filesystem::path config;
  std::filesystem::path grid;
  std::vector<std::string> overrides;
};

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::string split = "eval";
  std::optional<std::filesystem::path> output;
};

struct GradcheckArgs {
  std::string scope = "all";
  std::uint64_t seed = 0;
};

struct MakeDataArgs {
  std::string kind;
  std::size_t n = 400;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

// Each command returns a process exit code. Failures print one line
// "CATEGORY: detail" to `err`, with CATEGORY one of CONFIG, DATA, NUMERIC, IO.
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_grid(const GridArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err);
int cmd_make_data(const MakeDataArgs& args, std::ostream& out, std::ostream& err);

// Runs `body`, translating exceptions into the one-line error format.
int guarded(std::ostream& err, const std::function<int()>& body);

}  // namespace supcl::cli
