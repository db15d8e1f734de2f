#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "supcl/data.hpp"
#include "supcl/encoder.hpp"
#include "supcl/pipeline.hpp"

namespace supcl::cli {

inline constexpr int kConfigSchema = 1;

// One structured file holding everything a run needs. Sections: task,
// encoder, train, paths. Unknown keys are rejected.
struct RunConfig {
  std::string task = "separable_keywords";
  // Size and seed of a generated dataset; used when paths.data_dir is empty.
  std::size_t synthetic_n = 400;
  std::uint64_t data_seed = 0;
  std::size_t max_len = 32;

  EncoderConfig encoder;
  TrainSpec train;

  std::filesystem::path data_dir;
  std::filesystem::path output_dir;

  void validate() const;
};

// Task defaults (learning rate, batch size, schedule, epochs, temperature),
// then the file, then `key=value` overrides with dotted keys such as
// "train.temperature=0.2". Values parse as JSON when they can, else as strings.
RunConfig load_run_config(std::string_view json_text, const std::vector<std::string>& overrides = {});
RunConfig read_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// Every field written out; feeding it back reproduces the run.
std::string to_json(const RunConfig& config);

// Loads TSV splits from data_dir, or generates the synthetic task.
TaskData load_task_data(const RunConfig& config);

// paths.output_dir, else $SUPCL_OUTPUT_ROOT, else "runs".
std::filesystem::path output_root(const RunConfig& config);

// Creates a new "<prefix>-<UTC timestamp>[-k]" directory under root.
std::filesystem::path fresh_run_dir(const std::filesystem::path& root, std::string_view prefix);

struct GridFile {
  GridSpec grid;
  std::size_t jobs = 1;
};

// {"schema_version": 1, "schedules": [[0.0, 0.1], ...], "learning_rates": [...], "jobs": 1}
GridFile load_grid(std::string_view json_text);

}  // namespace supcl::cli
