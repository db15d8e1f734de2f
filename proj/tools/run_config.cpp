#include "run_config.hpp"

#include <cstdlib>
#include <ctime>
#include <set>

#include "json.hpp"
#include "supcl/error.hpp"
#include "supcl/serialization.hpp"

namespace supcl::cli {

namespace {

using json = nlohmann::json;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"task", {"name", "synthetic_n", "data_seed", "max_len"}},
      {"encoder", {"max_seq_len", "d_model", "n_heads", "n_layers", "d_ff", "dropout_sites"}},
      {"train",
       {"mode", "schedule", "temperature", "learning_rate", "batch_size", "stage_a_epochs", "stage_b_epochs",
        "probe_learning_rate", "ce_dropout", "weight_decay", "beta1", "beta2", "eps", "seed", "loss_reduction"}},
      {"paths", {"data_dir", "output_dir"}},
  };
  return keys;
}

json parse_or_fail(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string(what) + " is not valid JSON: " + e.what());
  }
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail(ErrorKind::config, "override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) fail(ErrorKind::config, "override key '" + key + "' has an empty component");
    if (!node->is_object()) fail(ErrorKind::config, "override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

void check_keys(const json& root) {
  if (!root.is_object()) fail(ErrorKind::config, "config must be a JSON object");
  for (const auto& [section, body] : root.items()) {
    if (section == "schema_version") continue;
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) fail(ErrorKind::config, "unknown config key '" + section + "'");
    if (!body.is_object()) fail(ErrorKind::config, "config section '" + section + "' must be an object");
    for (const auto& [key, _] : body.items()) {
      if (!it->second.contains(key)) fail(ErrorKind::config, "unknown config key '" + section + "." + key + "'");
    }
  }
}

class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (root.contains(name_)) body_ = root.at(name_);
  }

  bool has(const std::string& key) const { return body_.is_object() && body_.contains(key); }

  template <class T>
  void read(const std::string& key, T& out) const {
    if (!has(key)) return;
    const json& v = body_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) bad_type(key, "a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) bad_type(key, "a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) bad_type(key, "a number");
    } else {
      if (!v.is_string()) bad_type(key, "a string");
    }
    out = v.get<T>();
  }

  const json& at(const std::string& key) const { return body_.at(key); }

  [[noreturn]] void bad_type(const std::string& key, std::string_view expected) const {
    fail(ErrorKind::config, "config key '" + name_ + "." + key + "' must be " + std::string(expected));
  }

 private:
  std::string name_;
  json body_;
};

DropoutSchedule schedule_from(const json& v, std::string_view where) {
  if (!v.is_array()) fail(ErrorKind::config, std::string(where) + " must be an array of probabilities");
  std::vector<double> ps;
  for (const json& p : v) {
    if (!p.is_number()) fail(ErrorKind::config, std::string(where) + " must contain only numbers");
    ps.push_back(p.get<double>());
  }
  return DropoutSchedule(std::move(ps));
}

RunConfig build(const json& root) {
  check_keys(root);
  if (!root.contains("schema_version")) fail(ErrorKind::config, "config is missing schema_version");
  if (root.at("schema_version") != kConfigSchema) {
    fail(ErrorKind::config, "unsupported config schema_version " + root.at("schema_version").dump() +
                                ", expected " + std::to_string(kConfigSchema));
  }

  RunConfig c;
  const Section task(root, "task"), enc(root, "encoder"), train(root, "train"), paths(root, "paths");
  task.read("name", c.task);
  builtin_task(c.task);
  task.read("synthetic_n", c.synthetic_n);
  task.read("data_seed", c.data_seed);
  task.read("max_len", c.max_len);

  Mode mode = Mode::supcl;
  if (train.has("mode")) {
    std::string name;
    train.read("mode", name);
    mode = mode_from_string(name);
  }
  try {
    c.train = recommended_spec(c.task, mode);
  } catch (const Error&) {
    c.train = TrainSpec{};
    c.train.task = c.task;
    c.train.mode = mode;
  }
  TrainSpec& t = c.train;
  if (train.has("schedule")) t.schedule = schedule_from(train.at("schedule"), "train.schedule");
  train.read("temperature", t.temperature);
  train.read("learning_rate", t.learning_rate);
  train.read("batch_size", t.batch_size);
  train.read("stage_a_epochs", t.stage_a_epochs);
  train.read("stage_b_epochs", t.stage_b_epochs);
  train.read("probe_learning_rate", t.probe_learning_rate);
  train.read("ce_dropout", t.ce_dropout);
  train.read("weight_decay", t.adam.weight_decay);
  train.read("beta1", t.adam.beta1);
  train.read("beta2", t.adam.beta2);
  train.read("eps", t.adam.eps);
  train.read("seed", t.seed);
  if (train.has("loss_reduction")) {
    std::string name;
    train.read("loss_reduction", name);
    t.loss_reduction = reduction_from_string(name);
  }

  enc.read("max_seq_len", c.encoder.max_seq_len);
  enc.read("d_model", c.encoder.d_model);
  enc.read("n_heads", c.encoder.n_heads);
  enc.read("n_layers", c.encoder.n_layers);
  enc.read("d_ff", c.encoder.d_ff);
  if (enc.has("dropout_sites")) {
    const json& v = enc.at("dropout_sites");
    if (!v.is_array()) enc.bad_type("dropout_sites", "an array of site names");
    std::vector<DropoutSite> sites;
    for (const json& s : v) {
      if (!s.is_string()) enc.bad_type("dropout_sites", "an array of site names");
      sites.push_back(dropout_site_from_string(s.get<std::string>()));
    }
    c.encoder.dropout_sites = DropoutSites::from_list(sites);
  }

  std::string data_dir, output_dir;
  paths.read("data_dir", data_dir);
  paths.read("output_dir", output_dir);
  c.data_dir = data_dir;
  c.output_dir = output_dir;

  c.validate();
  return c;
}

}  // namespace

void RunConfig::validate() const {
  builtin_task(task);
  if (train.task != task) fail(ErrorKind::config, "train spec task does not match task.name");
  train.validate();
  EncoderConfig probe = encoder;
  probe.vocab_size = 8;
  probe.validate();
  if (max_len < 3) fail(ErrorKind::config, "task.max_len must be >= 3");
  if (max_len > encoder.max_seq_len) {
    fail(ErrorKind::config, "task.max_len " + std::to_string(max_len) + " exceeds encoder.max_seq_len " +
                                std::to_string(encoder.max_seq_len));
  }
  if (data_dir.empty()) {
    if (!is_synthetic_task(task)) {
      fail(ErrorKind::config, "task '" + task + "' needs paths.data_dir with train.tsv and dev.tsv");
    }
    if (synthetic_n < 30) fail(ErrorKind::config, "task.synthetic_n must be >= 30");
  }
}

RunConfig load_run_config(std::string_view json_text, const std::vector<std::string>& overrides) {
  json root = parse_or_fail(json_text, "config");
  if (!root.is_object()) fail(ErrorKind::config, "config must be a JSON object");
  for (const std::string& o : overrides) apply_override(root, o);
  return build(root);
}

RunConfig read_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  return load_run_config(read_file(path), overrides);
}

std::string to_json(const RunConfig& c) {
  const TrainSpec& t = c.train;
  json sites = json::array();
  for (DropoutSite s : c.encoder.dropout_sites.list()) sites.push_back(std::string(to_string(s)));
  json root{
      {"schema_version", kConfigSchema},
      {"task", {{"name", c.task}, {"synthetic_n", c.synthetic_n}, {"data_seed", c.data_seed}, {"max_len", c.max_len}}},
      {"encoder",
       {{"max_seq_len", c.encoder.max_seq_len},
        {"d_model", c.encoder.d_model},
        {"n_heads", c.encoder.n_heads},
        {"n_layers", c.encoder.n_layers},
        {"d_ff", c.encoder.d_ff},
        {"dropout_sites", sites}}},
      {"train",
       {{"mode", std::string(to_string(t.mode))},
        {"schedule", t.schedule.probabilities()},
        {"temperature", t.temperature},
        {"learning_rate", t.learning_rate},
        {"batch_size", t.batch_size},
        {"stage_a_epochs", t.stage_a_epochs},
        {"stage_b_epochs", t.stage_b_epochs},
        {"probe_learning_rate", t.probe_learning_rate},
        {"ce_dropout", t.ce_dropout},
        {"weight_decay", t.adam.weight_decay},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"eps", t.adam.eps},
        {"seed", t.seed},
        {"loss_reduction", std::string(to_string(t.loss_reduction))}}},
      {"paths", {{"data_dir", c.data_dir.string()}, {"output_dir", c.output_dir.string()}}},
  };
  return root.dump(2) + "\n";
}

TaskData load_task_data(const RunConfig& config) {
  const TaskDef& task = builtin_task(config.task);
  Splits splits;
  if (config.data_dir.empty()) {
    splits = make_synthetic(synthetic_kind_from_string(config.task), config.synthetic_n, config.data_seed);
  } else {
    splits.train = load_tsv(config.data_dir / "train.tsv", task);
    splits.dev = load_tsv(config.data_dir / "dev.tsv", task);
    if (std::filesystem::exists(config.data_dir / "test.tsv")) {
      splits.test = load_tsv(config.data_dir / "test.tsv", task);
    }
  }
  if (splits.train.empty()) fail(ErrorKind::empty_input, "training split is empty");
  if (splits.dev.empty()) fail(ErrorKind::empty_input, "dev split is empty");
  return prepare_task(task, splits, config.max_len);
}

std::filesystem::path output_root(const RunConfig& config) {
  if (!config.output_dir.empty()) return config.output_dir;
  if (const char* env = std::getenv("SUPCL_OUTPUT_ROOT"); env && *env) return env;
  return "runs";
}

std::filesystem::path fresh_run_dir(const std::filesystem::path& root, std::string_view prefix) {
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &utc);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) fail(ErrorKind::io, "cannot create output root " + root.string() + ": " + ec.message());
  const std::string base = std::string(prefix) + "-" + stamp;
  for (int k = 0; k < 10000; ++k) {
    const std::filesystem::path dir = root / (k == 0 ? base : base + "-" + std::to_string(k));
    if (std::filesystem::create_directory(dir, ec)) return dir;
    if (ec) fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
  }
  fail(ErrorKind::io, "no free run directory under " + root.string());
}

GridFile load_grid(std::string_view json_text) {
  const json root = parse_or_fail(json_text, "grid spec");
  if (!root.is_object()) fail(ErrorKind::config, "grid spec must be a JSON object");
  for (const auto& [key, _] : root.items()) {
    if (key != "schema_version" && key != "schedules" && key != "learning_rates" && key != "jobs") {
      fail(ErrorKind::config, "unknown grid key '" + key + "'");
    }
  }
  if (root.value("schema_version", json()) != kConfigSchema) {
    fail(ErrorKind::config, "grid spec needs schema_version " + std::to_string(kConfigSchema));
  }
  GridFile out;
  if (!root.contains("schedules") || !root.at("schedules").is_array() || root.at("schedules").empty()) {
    fail(ErrorKind::config, "grid spec needs a non-empty 'schedules' array");
  }
  for (const json& s : root.at("schedules")) out.grid.schedules.push_back(schedule_from(s, "grid schedule"));
  if (root.contains("learning_rates")) {
    const json& lrs = root.at("learning_rates");
    if (!lrs.is_array()) fail(ErrorKind::config, "grid 'learning_rates' must be an array");
    for (const json& lr : lrs) {
      if (!lr.is_number()) fail(ErrorKind::config, "grid 'learning_rates' must contain only numbers");
      out.grid.learning_rates.push_back(lr.get<double>());
    }
  }
  if (root.contains("jobs")) {
    if (!root.at("jobs").is_number_unsigned() || root.at("jobs").get<std::size_t>() == 0) {
      fail(ErrorKind::config, "grid 'jobs' must be a positive integer");
    }
    out.jobs = root.at("jobs").get<std::size_t>();
  }
  return out;
}

}  // namespace supcl::cli
