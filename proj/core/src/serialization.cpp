#include "supcl/serialization.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "supcl/error.hpp"

namespace supcl {

namespace {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'U', 'P', 'C', 'L', 'C', 'K', '\0'};

json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string(what) + ": " + e.what());
  }
}

json report_json(const EvalReport& r) {
  json metrics = json::object();
  for (const auto& [k, v] : r.values()) metrics[k] = v;
  return json{{"schema", kReportSchema}, {"task", r.task}, {"split", r.split},
              {"n_examples", r.n_examples}, {"metrics", metrics}};
}

EvalReport report_from(const json& j) {
  if (j.value("schema", 0) != kReportSchema) fail(ErrorKind::parse, "unsupported report schema");
  EvalReport r;
  r.task = j.at("task").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.n_examples = j.at("n_examples").get<std::size_t>();
  for (const auto& [k, v] : j.at("metrics").items()) {
    const double x = v.get<double>();
    if (k == "accuracy") r.accuracy = x;
    else if (k == "f1") r.f1 = x;
    else if (k == "mcc") r.mcc = x;
    else if (k == "pearson") r.pearson = x;
    else if (k == "spearman") r.spearman = x;
    else if (k == "mse") r.mse = x;
    else fail(ErrorKind::parse, "unknown metric '" + k + "' in report");
  }
  return r;
}

class Writer {
 public:
  void bytes(const void* data, std::size_t n) { out_.append(static_cast<const char*>(data), n); }
  template <class T>
  void pod(T v) {
    bytes(&v, sizeof(T));
  }
  void str(std::string_view s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) pod<std::uint64_t>(d);
    bytes(t.data().data(), t.size() * sizeof(double));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  void bytes(void* out, std::size_t n) {
    if (pos_ + n > in_.size()) fail(ErrorKind::parse, "checkpoint truncated");
    std::memcpy(out, in_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  std::string str(std::size_t n) {
    if (pos_ + n > in_.size()) fail(ErrorKind::parse, "checkpoint truncated");
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

json encoder_config_json(const EncoderConfig& c) {
  json sites = json::array();
  for (DropoutSite s : c.dropout_sites.list()) sites.push_back(std::string(to_string(s)));
  return json{{"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len}, {"d_model", c.d_model},
              {"n_heads", c.n_heads},       {"n_layers", c.n_layers},       {"d_ff", c.d_ff},
              {"dropout_sites", sites}};
}

EncoderConfig encoder_config_from(const json& j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  std::vector<DropoutSite> sites;
  for (const auto& s : j.at("dropout_sites")) sites.push_back(dropout_site_from_string(s.get<std::string>()));
  c.dropout_sites = DropoutSites::from_list(sites);
  return c;
}

}  // namespace

std::string runlog_to_jsonl(const RunLog& log) {
  std::string out;
  for (const EpochRecord& r : log.records) {
    json dev = json::object();
    for (const auto& [k, v] : r.dev_metrics) dev[k] = v;
    json rec{{"schema", kRunLogSchema}, {"stage", r.stage},           {"epoch", r.epoch},
             {"train_loss", r.train_loss}, {"batch_losses", r.batch_losses}, {"batch_rows", r.batch_rows},
             {"dev", dev}};
    out += rec.dump();
    out += '\n';
  }
  return out;
}

std::string timing_to_jsonl(const RunLog& log) {
  std::string out;
  for (const EpochRecord& r : log.records) {
    out += json{{"stage", r.stage}, {"epoch", r.epoch}, {"wall_clock_s", r.wall_clock_s}}.dump();
    out += '\n';
  }
  return out;
}

RunLog runlog_from_jsonl(std::string_view text) {
  RunLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = parse_json(line, "run log");
    if (j.value("schema", 0) != kRunLogSchema) fail(ErrorKind::parse, "unsupported run log schema");
    EpochRecord r;
    r.stage = j.at("stage").get<std::string>();
    r.epoch = j.at("epoch").get<std::size_t>();
    r.train_loss = j.at("train_loss").get<double>();
    r.batch_losses = j.at("batch_losses").get<std::vector<double>>();
    r.batch_rows = j.at("batch_rows").get<std::size_t>();
    for (const auto& [k, v] : j.at("dev").items()) r.dev_metrics[k] = v.get<double>();
    log.append(std::move(r));
  }
  return log;
}

std::string report_to_json(const EvalReport& report) { return report_json(report).dump(2) + "\n"; }

EvalReport report_from_json(std::string_view text) { return report_from(parse_json(text, "report")); }

std::string summary_to_json(const ExperimentResult& result) {
  const TrainSpec& s = result.spec;
  json run{{"task", s.task},
           {"mode", std::string(to_string(s.mode))},
           {"schedule", s.schedule.to_string()},
           {"views", s.schedule.views()},
           {"batch_size", s.batch_size},
           {"batch_rows", s.batch_size * (s.mode == Mode::standard_ce ? 1 : s.schedule.views())},
           {"temperature", s.temperature},
           {"learning_rate", s.learning_rate},
           {"seed", s.seed},
           {"encoder_checksum", result.weights.checksum()},
           {"log_records", result.log.records.size()}};
  json j{{"schema", kReportSchema}, {"run", run}, {"dev", report_json(result.dev)}};
  if (result.test) j["test"] = report_json(*result.test);
  return j.dump(2) + "\n";
}

std::string encode_checkpoint(const Checkpoint& ck) {
  ck.encoder.validate();
  json meta{{"format", "supcl-seq checkpoint"},
            {"encoder", encoder_config_json(ck.encoder.config)},
            {"task", ck.task},
            {"max_len", ck.max_len},
            {"vocab", ck.vocab.tokens()},
            {"head_classes", ck.head ? ck.head->n_classes() : 0}};
  const std::string meta_text = meta.dump();

  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint32_t>(0);
  w.pod<std::uint64_t>(meta_text.size());
  w.bytes(meta_text.data(), meta_text.size());
  const auto params = ck.encoder.named_parameters();
  w.pod<std::uint64_t>(params.size() + (ck.head ? 2 : 0));
  for (const NamedTensor& p : params) w.tensor(p.name, p.tensor);
  if (ck.head) {
    w.tensor("head.weight", ck.head->weight);
    w.tensor("head.bias", ck.head->bias);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) fail(ErrorKind::parse, "not a checkpoint file");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::parse, "unsupported checkpoint version " + std::to_string(version));
  }
  r.pod<std::uint32_t>();
  const json meta = parse_json(r.str(r.pod<std::uint64_t>()), "checkpoint metadata");

  Checkpoint ck;
  try {
    ck.encoder = init_weights(encoder_config_from(meta.at("encoder")), 0);
    ck.task = meta.at("task").get<std::string>();
    ck.max_len = meta.at("max_len").get<std::size_t>();
    ck.vocab = Vocab::from_tokens(meta.at("vocab").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("checkpoint metadata: ") + e.what());
  }
  const std::size_t head_classes = meta.value("head_classes", std::size_t{0});
  if (head_classes > 0) {
    ck.head = ProbeHead{Tensor::zeros({ck.encoder.config.d_model, head_classes}, true),
                        Tensor::zeros({head_classes}, true)};
  }

  std::map<std::string, Tensor> slots;
  for (const NamedTensor& p : ck.encoder.named_parameters()) slots.emplace(p.name, p.tensor);
  if (ck.head) {
    slots.emplace("head.weight", ck.head->weight);
    slots.emplace("head.bias", ck.head->bias);
  }
  const auto count = r.pod<std::uint64_t>();
  if (count != slots.size()) fail(ErrorKind::parse, "checkpoint tensor count mismatch");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.pod<std::uint32_t>());
    auto it = slots.find(name);
    if (it == slots.end()) fail(ErrorKind::parse, "unexpected tensor '" + name + "' in checkpoint");
    Shape shape(r.pod<std::uint32_t>());
    for (std::size_t& d : shape) d = r.pod<std::uint64_t>();
    Tensor& slot = it->second;
    if (shape != slot.shape()) {
      fail(ErrorKind::parse, "tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                                 shape_str(slot.shape()));
    }
    auto values = slot.mutable_data();
    r.bytes(values.data(), values.size() * sizeof(double));
  }
  if (!r.done()) fail(ErrorKind::parse, "trailing bytes after checkpoint");
  ck.encoder.validate();
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

}  // namespace supcl
