#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "supcl/encoder.hpp"

namespace supcl {

enum class TaskKind { single_sentence, sentence_pair, regression };
enum class Metric { accuracy, f1, mcc, pearson, spearman, mse };

std::string_view to_string(TaskKind kind);
std::string_view to_string(Metric metric);

struct TaskDef {
  std::string name;
  TaskKind kind = TaskKind::single_sentence;
  std::size_t n_classes = 2;
  // The first entry is the task's headline metric.
  std::vector<Metric> metrics;
  std::string text_a_column = "sentence";
  std::string text_b_column;  // empty for single-sentence tasks
  std::string label_column = "label";
  // Optional symbolic labels, e.g. {"entailment", "not_entailment"}.
  std::vector<std::string> label_names;
  double label_lo = 0.0;
  double label_hi = 0.0;
  std::size_t positive_class = 1;

  bool has_pair() const { return !text_b_column.empty(); }
  Metric primary_metric() const { return metrics.front(); }
};

// GLUE-style tasks plus the synthetic ones: separable_keywords, parity,
// pair_overlap.
const TaskDef& builtin_task(std::string_view name);
std::vector<std::string> builtin_task_names();
bool is_synthetic_task(std::string_view name);

struct Example {
  std::string text_a;
  std::optional<std::string> text_b;
  double raw_label = 0.0;     // class id or real-valued score
  std::size_t class_id = 0;
};

class Vocab {
 public:
  static constexpr std::size_t pad_id = 0;
  static constexpr std::size_t cls_id = kClsId;
  static constexpr std::size_t sep_id = 2;
  static constexpr std::size_t unk_id = 3;

  Vocab();
  // Non-reserved tokens in first-appearance order.
  static Vocab build(std::span<const Example> corpus);
  // Full id-ordered token list, reserved entries included.
  static Vocab from_tokens(std::vector<std::string> tokens);

  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  void add(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

std::vector<std::string> split_whitespace(std::string_view text);

struct TokenRow {
  std::vector<std::size_t> ids;
  std::vector<std::uint8_t> mask;
  std::size_t length() const;  // number of real tokens
};

// [CLS] a [SEP] (b [SEP]) truncated longest-first to max_len and padded.
TokenRow tokenize(const Example& example, const Vocab& vocab, std::size_t max_len);

// Inverse of tokenize for in-vocab text; specials and padding are dropped.
std::vector<std::string> detokenize(std::span<const std::size_t> ids, const Vocab& vocab);

std::vector<Example> load_tsv(const std::filesystem::path& path, const TaskDef& task);
std::vector<Example> parse_tsv(std::string_view contents, const TaskDef& task,
                               std::string_view source = "<memory>");
void write_tsv(const std::filesystem::path& path, std::span<const Example> examples,
               const TaskDef& task);

inline constexpr std::size_t kRegressionBins = 51;

// class id = round(10 * label) on [0, 5]; midpoint decoding via
// regression_class_value.
std::vector<Example> round_regression_labels(std::span<const Example> examples, const TaskDef& task);
double regression_class_value(std::size_t class_id);

enum class SyntheticKind { separable_keywords, parity, pair_overlap };
SyntheticKind synthetic_kind_from_string(std::string_view name);
std::string_view to_string(SyntheticKind kind);

struct Splits {
  std::vector<Example> train, dev, test;
};

// 70/15/15 split of n generated examples; n >= 30.
Splits make_synthetic(SyntheticKind kind, std::size_t n, std::uint64_t seed);

struct EncodedSplit {
  std::vector<TokenRow> rows;
  std::vector<std::size_t> labels;
  std::vector<double> values;  // raw labels, real-valued for regression

  std::size_t size() const { return rows.size(); }
};

struct TaskData {
  TaskDef task;
  Vocab vocab;
  std::size_t max_len = 0;
  EncodedSplit train, dev, test;
};

EncodedSplit encode_split(std::span<const Example> examples, const Vocab& vocab, std::size_t max_len);

// Builds the vocab from train, rounds regression labels, tokenizes all splits.
TaskData prepare_task(const TaskDef& task, const Splits& splits, std::size_t max_len);

// Batch of the given rows with trailing all-pad columns trimmed.
TokenBatch make_batch(const EncodedSplit& split, std::span<const std::size_t> indices);

}  // namespace supcl
