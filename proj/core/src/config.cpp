#include "eqgan/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_map>

#include "eqgan/errors.hpp"
#include "eqgan/hash.hpp"

#ifndef EQGAN_VERSION
#define EQGAN_VERSION "unknown"
#endif

namespace eqgan {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* kind) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + kind);
}

int64_t parse_int(const std::string& key, const std::string& value) {
  int64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, "an integer");
  return out;
}

uint64_t parse_uint(const std::string& key, const std::string& value) {
  uint64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, "an unsigned integer");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double out = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size()) bad_value(key, value, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value, "a boolean");
}

std::array<int64_t, 5> parse_plan(const std::string& key, const std::string& value) {
  std::array<int64_t, 5> out{};
  std::stringstream ss(value);
  std::string item;
  size_t n = 0;
  while (std::getline(ss, item, ',')) {
    if (n >= out.size()) bad_value(key, value, "five comma-separated integers");
    out[n++] = parse_int(key, trim(item));
  }
  if (n != out.size()) bad_value(key, value, "five comma-separated integers");
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_plan(const std::array<int64_t, 5>& plan) {
  std::string out;
  for (size_t i = 0; i < plan.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(plan[i]);
  }
  return out;
}

struct Field {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field int_field(std::string name, T RunConfig::*member) {
  return {name,
          [name, member](RunConfig& c, const std::string& v) {
            if constexpr (std::is_unsigned_v<T>) {
              c.*member = parse_uint(name, v);
            } else {
              c.*member = parse_int(name, v);
            }
          },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field double_field(std::string name, double RunConfig::*member) {
  return {name, [name, member](RunConfig& c, const std::string& v) { c.*member = parse_double(name, v); },
          [member](const RunConfig& c) { return format_double(c.*member); }};
}

Field weight_field(std::string name, double losses::LossWeights::*member) {
  return {name,
          [name, member](RunConfig& c, const std::string& v) { c.weights.*member = parse_double(name, v); },
          [member](const RunConfig& c) { return format_double(c.weights.*member); }};
}

Field bool_field(std::string name, bool RunConfig::*member) {
  return {name, [name, member](RunConfig& c, const std::string& v) { c.*member = parse_bool(name, v); },
          [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field string_field(std::string name, std::string RunConfig::*member) {
  return {name, [member](RunConfig& c, const std::string& v) { c.*member = v; },
          [member](const RunConfig& c) { return c.*member; }};
}

Field plan_field(std::string name, std::array<int64_t, 5> RunConfig::*member) {
  return {name, [name, member](RunConfig& c, const std::string& v) { c.*member = parse_plan(name, v); },
          [member](const RunConfig& c) { return format_plan(c.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      string_field("data_root", &RunConfig::data_root),
      int_field("total_categories", &RunConfig::total_categories),
      int_field("seen_count", &RunConfig::seen_count),
      int_field("unseen_count", &RunConfig::unseen_count),
      int_field("images_per_category", &RunConfig::images_per_category),
      int_field("image_size", &RunConfig::image_size),
      int_field("split_seed", &RunConfig::split_seed),
      plan_field("channel_plan", &RunConfig::channel_plan),
      plan_field("disc_channel_plan", &RunConfig::disc_channel_plan),
      int_field("iterations", &RunConfig::iterations),
      int_field("batch_size", &RunConfig::batch_size),
      int_field("k", &RunConfig::k),
      double_field("lr", &RunConfig::lr),
      double_field("beta1", &RunConfig::beta1),
      double_field("beta2", &RunConfig::beta2),
      weight_field("lambda_cls_g", &losses::LossWeights::cls_g),
      weight_field("lambda_rec", &losses::LossWeights::rec_g),
      weight_field("lambda_con", &losses::LossWeights::con_g),
      weight_field("lambda_cls_d", &losses::LossWeights::cls_d),
      bool_field("texture_skips", &RunConfig::texture_skips),
      bool_field("structure_skips", &RunConfig::structure_skips),
      bool_field("consistent_equalization", &RunConfig::consistent_equalization),
      int_field("seed", &RunConfig::seed),
      int_field("checkpoint_interval", &RunConfig::checkpoint_interval),
      int_field("log_interval", &RunConfig::log_interval),
      string_field("output_dir", &RunConfig::output_dir),
      string_field("run_name", &RunConfig::run_name),
      int_field("eval_per_category", &RunConfig::eval_per_category),
      int_field("eval_k", &RunConfig::eval_k),
      int_field("unseen_split_first", &RunConfig::unseen_split_first),
      int_field("unseen_split_second", &RunConfig::unseen_split_second),
      int_field("eval_seed", &RunConfig::eval_seed),
      string_field("fid_embedder", &RunConfig::fid_embedder),
      string_field("lpips_embedder", &RunConfig::lpips_embedder),
      int_field("cls_train", &RunConfig::cls_train),
      int_field("cls_val", &RunConfig::cls_val),
      int_field("cls_test", &RunConfig::cls_test),
      int_field("augment_per_category", &RunConfig::augment_per_category),
      int_field("classifier_epochs", &RunConfig::classifier_epochs),
      int_field("classifier_pretrain_epochs", &RunConfig::classifier_pretrain_epochs),
      int_field("classifier_width", &RunConfig::classifier_width),
      int_field("classifier_blocks", &RunConfig::classifier_blocks),
      double_field("classifier_lr", &RunConfig::classifier_lr),
  };
  return table;
}

const Field& field(const std::string& key) {
  static const std::unordered_map<std::string, const Field*> index = [] {
    std::unordered_map<std::string, const Field*> m;
    for (const auto& f : fields()) m.emplace(f.name, &f);
    return m;
  }();
  auto it = index.find(key);
  if (it == index.end()) {
    std::string valid;
    for (const auto& name : config_keys()) valid += (valid.empty() ? "" : ", ") + name;
    throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid);
  }
  return *it->second;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void RunConfig::validate() const {
  require(iterations > 0, "iterations must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(k >= 2, "k must be at least 2");
  require(eval_k >= 2, "eval_k must be at least 2");
  require(lr >= 0.0, "lr must be non-negative");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
  require(checkpoint_interval > 0, "checkpoint_interval must be positive");
  require(log_interval > 0, "log_interval must be positive");
  require(eval_per_category >= 2, "eval_per_category must be at least 2");
  require(unseen_split_first > 0 && unseen_split_second > 0, "unseen split parts must be positive");
  require(cls_train > 0 && cls_val >= 0 && cls_test > 0, "classification split counts must be positive");
  require(augment_per_category >= 0, "augment_per_category must be non-negative");
  require(classifier_epochs > 0 && classifier_pretrain_epochs >= 0, "classifier epochs must be positive");
  require(classifier_width > 0 && classifier_blocks > 0, "classifier width and depth must be positive");
  try {
    weights.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  generator_config().validate();
  DiscriminatorConfig d = discriminator_config(1);
  d.validate();
}

DatasetSpec RunConfig::dataset_spec() const {
  return {data_root, total_categories, seen_count, unseen_count, images_per_category, image_size};
}

GeneratorConfig RunConfig::generator_config() const {
  GeneratorConfig g;
  g.channel_plan = channel_plan;
  g.image_size = image_size;
  g.texture_skips = texture_skips;
  g.structure_skips = structure_skips;
  return g;
}

DiscriminatorConfig RunConfig::discriminator_config(int64_t num_classes) const {
  DiscriminatorConfig d;
  d.channel_plan = disc_channel_plan;
  d.image_size = image_size;
  d.num_classes = num_classes;
  return d;
}

std::filesystem::path RunConfig::resolved_output_dir() const {
  if (!output_dir.empty()) return output_dir;
  const char* root = std::getenv("EQGAN_OUTPUT_ROOT");
  return std::filesystem::path(root && *root ? root : "runs") / run_name;
}

bool RunConfig::operator==(const RunConfig& other) const {
  return serialize_config(*this) == serialize_config(other);
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.name);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  field(key).set(config, trim(value));
}

std::string get_config_value(const RunConfig& config, const std::string& key) {
  return field(key).get(config);
}

RunConfig parse_config_text(const std::string& text, const ConfigOverrides& overrides) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(config, trim(stripped.substr(0, eq)), stripped.substr(eq + 1));
  }
  for (const auto& [key, value] : overrides) set_config_value(config, key, value);
  config.validate();
  return config;
}

RunConfig parse_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), overrides);
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.name + " = " + f.get(config) + "\n";
  return out;
}

std::string config_hash(const RunConfig& config) {
  Fnv1a h;
  h.update(serialize_config(config));
  return h.hex();
}

std::string code_version() { return EQGAN_VERSION; }

}  // namespace eqgan
