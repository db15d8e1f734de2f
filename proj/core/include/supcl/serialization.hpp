#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "supcl/data.hpp"
#include "supcl/encoder.hpp"
#include "supcl/metrics.hpp"
#include "supcl/pipeline.hpp"

namespace supcl {

inline constexpr int kRunLogSchema = 1;
inline constexpr int kReportSchema = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

// One JSON record per epoch. Wall-clock time goes to a separate timing log so
// the run log itself is a pure function of (spec, data, seed).
std::string runlog_to_jsonl(const RunLog& log);
std::string timing_to_jsonl(const RunLog& log);
RunLog runlog_from_jsonl(std::string_view text);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);

// Summary file: dev/test reports plus run metadata.
std::string summary_to_json(const ExperimentResult& result);

struct Checkpoint {
  EncoderWeights encoder;
  std::optional<ProbeHead> head;
  Vocab vocab;
  std::string task;
  std::size_t max_len = 0;
};

// Binary layout: magic "SUPCLCK\0", u32 version, u32 reserved, u64 metadata
// length, JSON metadata, u64 tensor count, then per tensor: u32 name length,
// name, u32 rank, u64 dims, little-endian f64 values.
std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace supcl
