#include "supcl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "supcl/error.hpp"
#include "supcl/rng.hpp"

namespace supcl {

namespace {

const std::vector<TaskDef>& task_table() {
  static const std::vector<TaskDef> tasks = [] {
    auto single = [](std::string name, std::vector<Metric> metrics) {
      TaskDef t;
      t.name = std::move(name);
      t.kind = TaskKind::single_sentence;
      t.metrics = std::move(metrics);
      return t;
    };
    auto pair = [](std::string name, std::size_t classes, std::vector<Metric> metrics,
                   std::vector<std::string> names = {}) {
      TaskDef t;
      t.name = std::move(name);
      t.kind = TaskKind::sentence_pair;
      t.n_classes = classes;
      t.metrics = std::move(metrics);
      t.text_a_column = "sentence1";
      t.text_b_column = "sentence2";
      t.label_names = std::move(names);
      return t;
    };
    std::vector<TaskDef> out;
    out.push_back(single("cola", {Metric::mcc, Metric::accuracy}));
    out.push_back(single("sst2", {Metric::accuracy}));
    out.push_back(pair("mrpc", 2, {Metric::f1, Metric::accuracy}));
    out.push_back(pair("qqp", 2, {Metric::f1, Metric::accuracy}));
    out.push_back(pair("rte", 2, {Metric::accuracy}, {"entailment", "not_entailment"}));
    out.push_back(pair("qnli", 2, {Metric::accuracy}, {"entailment", "not_entailment"}));
    out.push_back(pair("wnli", 2, {Metric::accuracy}));
    out.push_back(pair("mnli", 3, {Metric::accuracy}, {"entailment", "neutral", "contradiction"}));
    TaskDef stsb = pair("stsb", kRegressionBins, {Metric::pearson, Metric::spearman, Metric::mse});
    stsb.kind = TaskKind::regression;
    stsb.label_lo = 0.0;
    stsb.label_hi = 5.0;
    out.push_back(stsb);
    out.push_back(single("separable_keywords", {Metric::accuracy, Metric::f1, Metric::mcc}));
    out.push_back(single("parity", {Metric::accuracy, Metric::mcc}));
    out.push_back(pair("pair_overlap", 2, {Metric::accuracy, Metric::f1}));
    return out;
  }();
  return tasks;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<std::size_t> parse_index(std::string_view s) {
  std::size_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void truncate_pair(std::vector<std::string>& a, std::vector<std::string>& b, std::size_t budget) {
  while (a.size() + b.size() > budget) {
    if (a.size() >= b.size()) a.pop_back();
    else b.pop_back();
  }
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

std::size_t draw_index(std::mt19937_64& engine, std::size_t n) {
  return static_cast<std::size_t>(uniform01(engine) * static_cast<double>(n));
}

template <class T>
void shuffle_in_place(std::vector<T>& v, std::mt19937_64& engine) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw_index(engine, i)]);
}

Example make_separable(std::mt19937_64& engine) {
  static const std::vector<std::string> keywords[2] = {{"good", "great", "fine", "nice"},
                                                       {"bad", "awful", "poor", "ugly"}};
  const std::size_t label = uniform01(engine) < 0.5 ? 0 : 1;
  std::vector<std::string> words;
  const std::size_t fillers = 4 + draw_index(engine, 5);
  for (std::size_t i = 0; i < fillers; ++i) words.push_back("f" + std::to_string(draw_index(engine, 24)));
  const std::size_t n_keywords = 1 + draw_index(engine, 2);
  for (std::size_t i = 0; i < n_keywords; ++i) {
    const auto& pool = keywords[label];
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(draw_index(engine, words.size() + 1)),
                 pool[draw_index(engine, pool.size())]);
  }
  return Example{join(words), std::nullopt, static_cast<double>(label), label};
}

// Six tokens, each "x" or "a"; label is the parity of the number of "x".
// Marker counts 0..4 are equally likely, so no threshold on the count (the
// only label-relevant linear feature of a bag of tokens) beats 60%.
Example make_parity(std::mt19937_64& engine) {
  constexpr std::size_t kLength = 6, kMaxMarkers = 4;
  const std::size_t count = draw_index(engine, kMaxMarkers + 1);
  std::vector<std::string> words(kLength, "a");
  std::fill_n(words.begin(), count, "x");
  shuffle_in_place(words, engine);
  const std::size_t label = count % 2;
  return Example{join(words), std::nullopt, static_cast<double>(label), label};
}

Example make_pair_overlap(std::mt19937_64& engine) {
  constexpr std::size_t kPool = 40, kWords = 6;
  std::vector<std::size_t> pool(kPool);
  std::iota(pool.begin(), pool.end(), 0);
  shuffle_in_place(pool, engine);
  std::vector<std::string> a, b;
  for (std::size_t i = 0; i < kWords; ++i) a.push_back("p" + std::to_string(pool[i]));
  const std::size_t shared = draw_index(engine, kWords + 1);
  std::vector<std::string> from_a = a;
  shuffle_in_place(from_a, engine);
  for (std::size_t i = 0; i < shared; ++i) b.push_back(from_a[i]);
  for (std::size_t i = 0; b.size() < kWords; ++i) b.push_back("p" + std::to_string(pool[kWords + i]));
  shuffle_in_place(b, engine);
  const std::size_t label = 2 * shared >= kWords ? 1 : 0;
  return Example{join(a), join(b), static_cast<double>(label), label};
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::single_sentence: return "single_sentence";
    case TaskKind::sentence_pair: return "sentence_pair";
    case TaskKind::regression: return "regression";
  }
  return "unknown";
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::accuracy: return "accuracy";
    case Metric::f1: return "f1";
    case Metric::mcc: return "mcc";
    case Metric::pearson: return "pearson";
    case Metric::spearman: return "spearman";
    case Metric::mse: return "mse";
  }
  return "unknown";
}

const TaskDef& builtin_task(std::string_view name) {
  for (const TaskDef& t : task_table()) {
    if (t.name == name) return t;
  }
  fail(ErrorKind::config, "unknown task '" + std::string(name) + "'");
}

std::vector<std::string> builtin_task_names() {
  std::vector<std::string> out;
  for (const TaskDef& t : task_table()) out.push_back(t.name);
  return out;
}

bool is_synthetic_task(std::string_view name) {
  return name == "separable_keywords" || name == "parity" || name == "pair_overlap";
}

Vocab::Vocab() {
  for (const char* t : {"[PAD]", "[CLS]", "[SEP]", "[UNK]"}) add(t);
}

void Vocab::add(const std::string& token) {
  if (ids_.contains(token)) return;
  ids_.emplace(token, tokens_.size());
  tokens_.push_back(token);
}

Vocab Vocab::build(std::span<const Example> corpus) {
  Vocab v;
  for (const Example& e : corpus) {
    for (const std::string& w : split_whitespace(e.text_a)) v.add(w);
    if (e.text_b) {
      for (const std::string& w : split_whitespace(*e.text_b)) v.add(w);
    }
  }
  return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  if (tokens.size() < 4 || !std::equal(v.tokens_.begin(), v.tokens_.end(), tokens.begin())) {
    fail(ErrorKind::parse, "vocab does not start with the reserved tokens");
  }
  for (std::size_t i = 4; i < tokens.size(); ++i) {
    if (v.ids_.contains(tokens[i])) fail(ErrorKind::parse, "duplicate vocab token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

std::size_t Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? unk_id : it->second;
}

const std::string& Vocab::token(std::size_t id) const {
  if (id >= tokens_.size()) fail(ErrorKind::range, "token id " + std::to_string(id) + " outside vocab");
  return tokens_[id];
}

bool Vocab::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) out.push_back(word);
  return out;
}

std::size_t TokenRow::length() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

TokenRow tokenize(const Example& example, const Vocab& vocab, std::size_t max_len) {
  if (max_len < 2) fail(ErrorKind::config, "tokenize: max_len must be >= 2");
  std::vector<std::string> a = split_whitespace(example.text_a);
  std::vector<std::string> b;
  const bool pair = example.text_b.has_value() && max_len >= 3;
  if (pair) b = split_whitespace(*example.text_b);
  truncate_pair(a, b, max_len - (pair ? 3 : 2));

  TokenRow row;
  row.ids.reserve(max_len);
  row.ids.push_back(Vocab::cls_id);
  for (const std::string& w : a) row.ids.push_back(vocab.id(w));
  row.ids.push_back(Vocab::sep_id);
  if (pair) {
    for (const std::string& w : b) row.ids.push_back(vocab.id(w));
    row.ids.push_back(Vocab::sep_id);
  }
  row.mask.assign(row.ids.size(), 1);
  row.ids.resize(max_len, Vocab::pad_id);
  row.mask.resize(max_len, 0);
  return row;
}

std::vector<std::string> detokenize(std::span<const std::size_t> ids, const Vocab& vocab) {
  std::vector<std::string> out;
  for (std::size_t id : ids) {
    if (id == Vocab::pad_id || id == Vocab::cls_id || id == Vocab::sep_id) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::vector<Example> parse_tsv(std::string_view contents, const TaskDef& task, std::string_view source) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < contents.size()) {
    std::size_t nl = contents.find('\n', start);
    if (nl == std::string_view::npos) nl = contents.size();
    std::string_view line = contents.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  const std::string where(source);
  if (lines.empty()) fail(ErrorKind::parse, where + ": missing header row");

  const auto header = split_fields(lines[0]);
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::parse, where + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t col_a = column(task.text_a_column);
  const std::optional<std::size_t> col_b =
      task.has_pair() ? std::optional<std::size_t>(column(task.text_b_column)) : std::nullopt;
  const std::size_t col_label = column(task.label_column);

  std::vector<Example> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string line_no = std::to_string(i + 1);
    if (lines[i].empty()) continue;
    const auto fields = split_fields(lines[i]);
    if (fields.size() != header.size()) {
      fail(ErrorKind::parse, where + ": line " + line_no + ": expected " + std::to_string(header.size()) +
                                 " fields, found " + std::to_string(fields.size()));
    }
    Example e;
    e.text_a = std::string(fields[col_a]);
    if (col_b) e.text_b = std::string(fields[*col_b]);
    const std::string_view label = fields[col_label];
    if (task.kind == TaskKind::regression) {
      auto v = parse_double(label);
      if (!v) fail(ErrorKind::parse, where + ": line " + line_no + ": unparsable label '" + std::string(label) + "'");
      e.raw_label = *v;
    } else {
      std::optional<std::size_t> id;
      auto named = std::find(task.label_names.begin(), task.label_names.end(), label);
      if (named != task.label_names.end()) id = static_cast<std::size_t>(named - task.label_names.begin());
      else id = parse_index(label);
      if (!id || *id >= task.n_classes) {
        fail(ErrorKind::parse, where + ": line " + line_no + ": unparsable label '" + std::string(label) + "'");
      }
      e.class_id = *id;
      e.raw_label = static_cast<double>(*id);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Example> load_tsv(const std::filesystem::path& path, const TaskDef& task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_tsv(buf.str(), task, path.string());
}

void write_tsv(const std::filesystem::path& path, std::span<const Example> examples, const TaskDef& task) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << task.text_a_column;
  if (task.has_pair()) out << '\t' << task.text_b_column;
  out << '\t' << task.label_column << '\n';
  for (const Example& e : examples) {
    out << e.text_a;
    if (task.has_pair()) out << '\t' << e.text_b.value_or("");
    out << '\t';
    if (task.kind == TaskKind::regression) out << format_real(e.raw_label);
    else out << e.class_id;
    out << '\n';
  }
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

std::vector<Example> round_regression_labels(std::span<const Example> examples, const TaskDef& task) {
  if (task.kind != TaskKind::regression) {
    fail(ErrorKind::config, "round_regression_labels: task '" + task.name + "' is not a regression task");
  }
  std::vector<Example> out(examples.begin(), examples.end());
  for (Example& e : out) {
    if (!(e.raw_label >= task.label_lo && e.raw_label <= task.label_hi)) {
      fail(ErrorKind::range, "regression label " + format_real(e.raw_label) + " outside [" +
                                 format_real(task.label_lo) + ", " + format_real(task.label_hi) + "]");
    }
    e.class_id = static_cast<std::size_t>(std::round(10.0 * e.raw_label));
  }
  return out;
}

double regression_class_value(std::size_t class_id) { return static_cast<double>(class_id) / 10.0; }

SyntheticKind synthetic_kind_from_string(std::string_view name) {
  if (name == "separable_keywords") return SyntheticKind::separable_keywords;
  if (name == "parity") return SyntheticKind::parity;
  if (name == "pair_overlap") return SyntheticKind::pair_overlap;
  fail(ErrorKind::config, "unknown synthetic task kind '" + std::string(name) + "'");
}

std::string_view to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::separable_keywords: return "separable_keywords";
    case SyntheticKind::parity: return "parity";
    case SyntheticKind::pair_overlap: return "pair_overlap";
  }
  return "unknown";
}

Splits make_synthetic(SyntheticKind kind, std::size_t n, std::uint64_t seed) {
  if (n < 30) fail(ErrorKind::config, "make_synthetic: n must be >= 30, got " + std::to_string(n));
  auto engine = RngStream{seed, 0x5e1ec7 + static_cast<std::uint64_t>(kind)}.engine();
  std::vector<Example> all;
  all.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case SyntheticKind::separable_keywords: all.push_back(make_separable(engine)); break;
      case SyntheticKind::parity: all.push_back(make_parity(engine)); break;
      case SyntheticKind::pair_overlap: all.push_back(make_pair_overlap(engine)); break;
    }
  }
  const std::size_t n_train = n * 70 / 100;
  const std::size_t n_dev = n * 15 / 100;
  Splits s;
  s.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.dev.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train),
               all.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev));
  s.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev), all.end());
  return s;
}

EncodedSplit encode_split(std::span<const Example> examples, const Vocab& vocab, std::size_t max_len) {
  EncodedSplit out;
  for (const Example& e : examples) {
    out.rows.push_back(tokenize(e, vocab, max_len));
    out.labels.push_back(e.class_id);
    out.values.push_back(e.raw_label);
  }
  return out;
}

TaskData prepare_task(const TaskDef& task, const Splits& splits, std::size_t max_len) {
  TaskData data;
  data.task = task;
  data.max_len = max_len;
  auto labelled = [&](const std::vector<Example>& raw) {
    return task.kind == TaskKind::regression ? round_regression_labels(raw, task) : raw;
  };
  const std::vector<Example> train = labelled(splits.train);
  data.vocab = Vocab::build(train);
  data.train = encode_split(train, data.vocab, max_len);
  data.dev = encode_split(labelled(splits.dev), data.vocab, max_len);
  data.test = encode_split(labelled(splits.test), data.vocab, max_len);
  return data;
}

TokenBatch make_batch(const EncodedSplit& split, std::span<const std::size_t> indices) {
  if (indices.empty()) fail(ErrorKind::empty_input, "make_batch: no rows selected");
  std::size_t seq = 1;
  for (std::size_t i : indices) {
    if (i >= split.size()) fail(ErrorKind::range, "make_batch: row index out of range");
    const auto& mask = split.rows[i].mask;
    for (std::size_t l = mask.size(); l > 0; --l) {
      if (mask[l - 1]) {
        seq = std::max(seq, l);
        break;
      }
    }
  }
  TokenBatch batch;
  batch.rows = indices.size();
  batch.seq_len = seq;
  for (std::size_t i : indices) {
    const TokenRow& row = split.rows[i];
    batch.token_ids.insert(batch.token_ids.end(), row.ids.begin(), row.ids.begin() + static_cast<std::ptrdiff_t>(seq));
    batch.attention_mask.insert(batch.attention_mask.end(), row.mask.begin(),
                                row.mask.begin() + static_cast<std::ptrdiff_t>(seq));
    batch.labels.push_back(split.labels[i]);
  }
  return batch;
}

}  // namespace supcl
