#include "eqgan/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eqgan/errors.hpp"
#include "eqgan/fusion.hpp"
#include "eqgan/hash.hpp"
#include "eqgan/losses.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace eqgan {

double lr_at(int64_t iteration, int64_t total_iterations, double base_lr) {
  if (total_iterations <= 0 || iteration < 0 || iteration > total_iterations) {
    throw ValidationError("lr_at: iteration " + std::to_string(iteration) + " outside [0, " +
                          std::to_string(total_iterations) + "]");
  }
  const int64_t half = total_iterations / 2;
  if (iteration <= half) return base_lr;
  const double remaining =
      static_cast<double>(total_iterations - iteration) / static_cast<double>(total_iterations - half);
  return base_lr * remaining;
}

std::string loss_log_header() {
  return "iteration,lr,loss_d,loss_g,d_adv,d_cls,g_adv,g_cls,g_rec,g_con";
}

std::string loss_log_row(const StepMetrics& m) {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(m.iteration), m.lr, m.loss_d, m.loss_g, m.d_adv, m.d_cls,
                m.g_adv, m.g_cls, m.g_rec, m.g_con);
  return buf;
}

namespace {

constexpr uint64_t kSamplerSalt = 0x5DEECE66DULL;

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

double grad_norm(const std::vector<torch::Tensor>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.grad().defined()) sq += p.grad().pow(2).sum().item<double>();
  }
  return std::sqrt(sq);
}

bool any_gradient(const std::vector<torch::Tensor>& params) {
  for (const auto& p : params) {
    if (p.grad().defined() && p.grad().abs().sum().item<double>() != 0.0) return true;
  }
  return false;
}

void hash_module(Fnv1a& h, const torch::nn::Module& module) {
  auto feed = [&h](const std::string& name, const torch::Tensor& t) {
    h.update(name);
    const auto c = t.detach().cpu().contiguous();
    h.update(std::span(static_cast<const std::byte*>(c.data_ptr()), c.nbytes()));
  };
  for (const auto& item : module.named_parameters()) feed(item.key(), item.value());
  for (const auto& item : module.named_buffers()) feed(item.key(), item.value());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

json read_manifest(const fs::path& checkpoint) {
  const fs::path path = checkpoint / "manifest.json";
  if (!fs::exists(path)) throw IoError("checkpoint manifest not found: " + path.string());
  return json::parse(read_text(path));
}

}  // namespace

Trainer::Trainer(RunConfig config, std::shared_ptr<const Dataset> dataset)
    : config_(std::move(config)), dataset_(std::move(dataset)) {
  config_.validate();
  if (!dataset_) throw UsageError("trainer needs a dataset");
  if (dataset_->spec().image_size != config_.image_size) {
    throw ConfigError("dataset image size differs from the configured image size");
  }
  build();
}

void Trainer::build() {
  torch::manual_seed(config_.seed);
  generator_ = Generator(config_.generator_config());
  discriminator_ = Discriminator(
      config_.discriminator_config(static_cast<int64_t>(dataset_->seen().size())));
  const auto betas = std::make_tuple(config_.beta1, config_.beta2);
  opt_g_ = std::make_unique<torch::optim::Adam>(
      generator_->parameters(), torch::optim::AdamOptions(config_.lr).betas(betas));
  opt_d_ = std::make_unique<torch::optim::Adam>(
      discriminator_->parameters(), torch::optim::AdamOptions(config_.lr).betas(betas));
  rng_.seed(config_.seed ^ kSamplerSalt);
  iteration_ = 0;
}

StepMetrics Trainer::step() {
  if (iteration_ >= config_.iterations) {
    throw UsageError("training already reached " + std::to_string(config_.iterations) +
                     " iterations");
  }
  StepMetrics m;
  m.lr = lr_at(iteration_, config_.iterations, config_.lr);
  set_lr(*opt_g_, m.lr);
  set_lr(*opt_d_, m.lr);

  const int64_t k = config_.k;
  std::vector<torch::Tensor> images;
  std::vector<int64_t> labels;
  std::vector<fusion::FusionPlan> plans;
  for (int64_t b = 0; b < config_.batch_size; ++b) {
    auto task = sample_task(*dataset_, Partition::seen, k, rng_);
    plans.push_back(fusion::sample_plan(k, rng_));
    labels.push_back(dataset_->seen_class_index(task.label));
    images.push_back(std::move(task.images));
  }
  const auto tasks = torch::stack(images);
  const auto task_labels = torch::tensor(labels, torch::kLong);

  generator_->train();
  discriminator_->train();
  auto out = generator_->generate(tasks, plans);

  // Discriminator update on real conditioning images and detached fakes.
  opt_d_->zero_grad();
  opt_g_->zero_grad();
  const auto d_real = discriminator_->forward(tasks.flatten(0, 1));
  const auto d_fake = discriminator_->forward(out.images.detach());
  losses::DiscriminatorLossParts d_parts{
      losses::hinge_d_loss(d_real.realness, d_fake.realness),
      losses::classification_loss(d_real.class_logits, task_labels.repeat_interleave(k))};
  const auto loss_d = losses::total_d_loss(d_parts, config_.weights);
  m.loss_d = loss_d.item<double>();
  m.d_adv = d_parts.adv.item<double>();
  m.d_cls = d_parts.cls.item<double>();
  if (!std::isfinite(m.loss_d)) diverged(m);
  loss_d.backward();
  TORCH_INTERNAL_ASSERT(!any_gradient(generator_->parameters()),
                        "discriminator loss leaked gradient into the generator");
  m.grad_norm_d = grad_norm(discriminator_->parameters());
  opt_d_->step();
  opt_d_->zero_grad();

  // Generator update with the discriminator frozen.
  for (auto& p : discriminator_->parameters()) p.set_requires_grad(false);
  const auto d_gen = discriminator_->forward(out.images);
  losses::GeneratorLossParts g_parts;
  g_parts.adv = losses::hinge_g_loss(d_gen.realness);
  g_parts.cls = losses::classification_loss(d_gen.class_logits, task_labels);
  g_parts.rec = losses::local_reconstruction_loss(out.images, tasks, out.plans);
  if (config_.consistent_equalization) {
    g_parts.con = losses::consistent_equalization_loss(out.equalized.f_eq,
                                                       decoder_intermediate(out));
  }
  const auto loss_g = losses::total_g_loss(g_parts, config_.weights);
  m.loss_g = loss_g.item<double>();
  m.g_adv = g_parts.adv.item<double>();
  m.g_cls = g_parts.cls.item<double>();
  m.g_rec = g_parts.rec.item<double>();
  m.g_con = g_parts.con.defined() ? g_parts.con.item<double>() : 0.0;
  if (!std::isfinite(m.loss_g)) {
    for (auto& p : discriminator_->parameters()) p.set_requires_grad(true);
    diverged(m);
  }
  loss_g.backward();
  for (auto& p : discriminator_->parameters()) p.set_requires_grad(true);
  TORCH_INTERNAL_ASSERT(!any_gradient(discriminator_->parameters()),
                        "generator loss leaked gradient into the discriminator");
  m.grad_norm_g = grad_norm(generator_->parameters());
  opt_g_->step();
  opt_g_->zero_grad();

  m.iteration = ++iteration_;
  return m;
}

void Trainer::diverged(const StepMetrics& m) const {
  json dump = {{"iteration", iteration_},    {"lr", m.lr},         {"loss_d", m.loss_d},
               {"loss_g", m.loss_g},         {"d_adv", m.d_adv},   {"d_cls", m.d_cls},
               {"g_adv", m.g_adv},           {"g_cls", m.g_cls},   {"g_rec", m.g_rec},
               {"g_con", m.g_con},           {"grad_norm_d", m.grad_norm_d},
               {"grad_norm_g", m.grad_norm_g}};
  const std::string text = dump.dump(2);
  try {
    const fs::path dir = config_.resolved_output_dir();
    fs::create_directories(dir);
    write_text(dir / "divergence.json", text);
  } catch (const std::exception&) {
    // The exception below carries the same dump.
  }
  throw DivergenceError("non-finite loss at iteration " + std::to_string(iteration_) + ": " + text);
}

std::string Trainer::parameter_hash() const {
  Fnv1a h;
  hash_module(h, *generator_);
  hash_module(h, *discriminator_);
  return h.hex();
}

void Trainer::save_checkpoint(const fs::path& dir) const {
  fs::path tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  torch::save(generator_, (tmp / "generator.pt").string());
  torch::save(discriminator_, (tmp / "discriminator.pt").string());
  torch::save(*opt_g_, (tmp / "optimizer_g.pt").string());
  torch::save(*opt_d_, (tmp / "optimizer_d.pt").string());
  std::ostringstream rng_state;
  rng_state << rng_;
  json manifest = {{"iteration", iteration_},
                   {"config", serialize_config(config_)},
                   {"config_hash", config_hash(config_)},
                   {"rng_state", rng_state.str()},
                   {"parameter_hash", parameter_hash()},
                   {"num_classes", static_cast<int64_t>(dataset_->seen().size())},
                   {"code_version", code_version()}};
  write_text(tmp / "manifest.json", manifest.dump(2));
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

Trainer Trainer::resume(const fs::path& checkpoint, std::shared_ptr<const Dataset> dataset) {
  const json manifest = read_manifest(checkpoint);
  Trainer trainer(parse_config_text(manifest.at("config").get<std::string>()), std::move(dataset));
  if (manifest.at("num_classes").get<int64_t>() != static_cast<int64_t>(trainer.dataset_->seen().size())) {
    throw ValidationError("checkpoint was trained with a different number of seen categories");
  }
  torch::load(trainer.generator_, (checkpoint / "generator.pt").string());
  torch::load(trainer.discriminator_, (checkpoint / "discriminator.pt").string());
  torch::load(*trainer.opt_g_, (checkpoint / "optimizer_g.pt").string());
  torch::load(*trainer.opt_d_, (checkpoint / "optimizer_d.pt").string());
  std::istringstream rng_state(manifest.at("rng_state").get<std::string>());
  rng_state >> trainer.rng_;
  trainer.iteration_ = manifest.at("iteration").get<int64_t>();
  return trainer;
}

fs::path latest_checkpoint(const fs::path& run_dir) {
  const fs::path pointer = run_dir / "checkpoints" / "LATEST";
  if (!fs::exists(pointer)) throw IoError("no checkpoint recorded under " + run_dir.string());
  std::string name = read_text(pointer);
  while (!name.empty() && (name.back() == '\n' || name.back() == '\r')) name.pop_back();
  return run_dir / "checkpoints" / name;
}

LoadedGenerator load_generator(const fs::path& checkpoint) {
  const json manifest = read_manifest(checkpoint);
  LoadedGenerator loaded;
  loaded.config = parse_config_text(manifest.at("config").get<std::string>());
  loaded.generator = Generator(loaded.config.generator_config());
  torch::load(loaded.generator, (checkpoint / "generator.pt").string());
  loaded.generator->eval();
  loaded.iteration = manifest.at("iteration").get<int64_t>();
  loaded.parameter_hash = manifest.at("parameter_hash").get<std::string>();
  return loaded;
}

RunConfig checkpoint_config(const fs::path& checkpoint) {
  return parse_config_text(read_manifest(checkpoint).at("config").get<std::string>());
}

void write_run_manifest(const fs::path& dir, const RunConfig& config, const std::string& command) {
  fs::create_directories(dir);
  json values = json::object();
  for (const auto& key : config_keys()) values[key] = get_config_value(config, key);
  json manifest = {{"command", command},
                   {"seed", config.seed},
                   {"config_hash", config_hash(config)},
                   {"code_version", code_version()},
                   {"config", values}};
  write_text(dir / "manifest.json", manifest.dump(2));
}

namespace {

// Keeps the header and rows up to `iteration` so a resumed run continues the same log.
void truncate_log(const fs::path& path, int64_t iteration) {
  if (!fs::exists(path)) return;
  std::istringstream in(read_text(path));
  std::string line;
  std::string kept;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      kept += line + "\n";
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) <= iteration) kept += line + "\n";
  }
  write_text(path, kept);
}

std::string checkpoint_name(int64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "iter_%07lld", static_cast<long long>(iteration));
  return buf;
}

}  // namespace

TrainResult train(const RunConfig& config, std::shared_ptr<const Dataset> dataset,
                  const TrainOptions& options) {
  Trainer trainer = options.resume_from ? Trainer::resume(*options.resume_from, dataset)
                                        : Trainer(config, dataset);
  const RunConfig& cfg = trainer.config();
  const fs::path run_dir = cfg.resolved_output_dir();
  TrainResult result;
  result.loss_log = run_dir / "loss_log.csv";

  if (cfg.consistent_equalization && !cfg.texture_skips && !cfg.structure_skips) {
    std::cerr << "[eqgan] note: consistent equalization is on while both skip branches are "
                 "disabled; F_eq is the projection of zero features\n";
  }

  std::ofstream log;
  if (options.write_files) {
    fs::create_directories(run_dir / "checkpoints");
    write_run_manifest(run_dir, cfg, options.resume_from ? "train --resume" : "train");
    if (options.resume_from) {
      truncate_log(result.loss_log, trainer.iteration());
      log.open(result.loss_log, std::ios::app);
    } else {
      log.open(result.loss_log, std::ios::trunc);
      log << loss_log_header() << '\n';
    }
    if (!log) throw IoError("cannot write " + result.loss_log.string());
  }

  auto checkpoint = [&](int64_t iteration) {
    if (!options.write_files) return;
    const std::string name = checkpoint_name(iteration);
    result.final_checkpoint = run_dir / "checkpoints" / name;
    trainer.save_checkpoint(result.final_checkpoint);
    write_text(run_dir / "checkpoints" / "LATEST", name + "\n");
  };

  const int64_t target =
      options.stop_after ? std::min(*options.stop_after, cfg.iterations) : cfg.iterations;
  int64_t last_saved = -1;
  while (trainer.iteration() < target) {
    const StepMetrics m = trainer.step();
    result.history.push_back(m);
    if (options.on_step) options.on_step(m);
    if (options.write_files && (m.iteration % cfg.log_interval == 0 || m.iteration == cfg.iterations)) {
      log << loss_log_row(m) << '\n';
      log.flush();
    }
    if (options.verbose && m.iteration % cfg.log_interval == 0) {
      std::cout << "[eqgan] iter " << m.iteration << " L_D=" << m.loss_d << " L_G=" << m.loss_g
                << " rec=" << m.g_rec << " lr=" << m.lr << std::endl;
    }
    if (m.iteration % cfg.checkpoint_interval == 0 || m.iteration == cfg.iterations) {
      checkpoint(m.iteration);
      last_saved = m.iteration;
    }
  }
  if (last_saved != trainer.iteration()) checkpoint(trainer.iteration());

  result.parameter_hash = trainer.parameter_hash();
  result.iterations = trainer.iteration();
  return result;
}

}  // namespace eqgan
