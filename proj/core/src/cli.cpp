#include "eqgan/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "eqgan/classifier.hpp"
#include "eqgan/config.hpp"
#include "eqgan/errors.hpp"
#include "eqgan/eval.hpp"
#include "eqgan/fusion.hpp"
#include "eqgan/image_io.hpp"
#include "eqgan/synthetic.hpp"
#include "eqgan/trainer.hpp"

namespace fs = std::filesystem;

namespace eqgan::cli {

namespace {

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

/// Config file plus `--<key>` overrides, shared by every model-facing subcommand.
struct ConfigArgs {
  std::string config_path;
  std::map<std::string, std::string> values;  // key -> raw override text

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "key = value config file");
    for (const auto& key : config_keys()) {
      app.add_option("--" + dashed(key), values[key], "override config key " + key);
    }
  }

  ConfigOverrides overrides(const CLI::App& app) const {
    ConfigOverrides out;
    for (const auto& key : config_keys()) {
      if (app.count("--" + dashed(key)) > 0) out.emplace_back(key, values.at(key));
    }
    return out;
  }

  RunConfig resolve(const CLI::App& app) const {
    if (config_path.empty()) return parse_config_text("", overrides(app));
    return parse_config(config_path, overrides(app));
  }
};

std::string joined(const std::vector<std::string>& args) {
  std::string s = "eqgan";
  for (const auto& a : args) s += " " + a;
  return s;
}

/// `last`, a run directory with checkpoints/LATEST, or a checkpoint directory.
fs::path resolve_checkpoint(const std::string& spec, const RunConfig& config) {
  if (spec.empty()) throw UsageError("--checkpoint is required");
  if (spec == "last") return latest_checkpoint(config.resolved_output_dir());
  const fs::path p(spec);
  if (fs::exists(p / "checkpoints" / "LATEST")) return latest_checkpoint(p);
  if (!fs::exists(p / "manifest.json")) throw IoError("not a checkpoint: " + spec);
  return p;
}

/// Config for commands reading a checkpoint: the checkpoint's own config unless a file is
/// given, with command-line overrides on top.
RunConfig config_for(const ConfigArgs& args, const CLI::App& app, const RunConfig& base,
                     const fs::path& checkpoint) {
  if (!args.config_path.empty()) return base;
  return parse_config_text(serialize_config(checkpoint_config(checkpoint)), args.overrides(app));
}

fs::path output_dir(const std::string& flag, const RunConfig& config, const char* leaf) {
  return flag.empty() ? config.resolved_output_dir() / leaf : fs::path(flag);
}

std::vector<torch::Tensor> read_images(const std::vector<std::string>& files, int64_t size) {
  std::vector<torch::Tensor> out;
  for (const auto& f : files) out.push_back(image_io::normalize(image_io::read_rgb(f, size)));
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot image generation with feature equalization fusion", "eqgan"};
  app.require_subcommand(1);
  const std::string command = joined(args);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a generator/discriminator pair");
  ConfigArgs train_args;
  train_args.attach(*train_cmd);
  std::string resume;
  int64_t stop_after = 0;
  bool quiet = false;
  train_cmd->add_option("--resume", resume, "checkpoint directory or 'last'");
  train_cmd->add_option("--stop-after", stop_after, "stop after this many total iterations");
  train_cmd->add_flag("--quiet", quiet, "no progress lines");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "generate images from K conditioning images");
  ConfigArgs gen_args;
  gen_args.attach(*gen_cmd);
  std::string gen_checkpoint, gen_out;
  std::vector<std::string> gen_images;
  int64_t gen_count = 16;
  uint64_t gen_seed = 0;
  gen_cmd->add_option("--checkpoint", gen_checkpoint, "checkpoint directory or 'last'")->required();
  gen_cmd->add_option("--images", gen_images, "conditioning image files (K >= 2)")->required();
  gen_cmd->add_option("--count", gen_count, "images to generate");
  gen_cmd->add_option("--sample-seed", gen_seed, "seed for fusion weights");
  gen_cmd->add_option("--out", gen_out, "output directory");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "FID / LPIPS on the unseen categories");
  ConfigArgs eval_args;
  eval_args.attach(*eval_cmd);
  std::string eval_checkpoint_spec, eval_out;
  int64_t per_category = 0;
  eval_cmd->add_option("--checkpoint", eval_checkpoint_spec, "checkpoint directory or 'last'")->required();
  eval_cmd->add_option("--per-category", per_category, "generated images per category");
  eval_cmd->add_option("--out", eval_out, "output directory");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "FID across shot counts");
  ConfigArgs sweep_args;
  sweep_args.attach(*sweep_cmd);
  std::vector<std::string> sweep_pairs;
  std::vector<int64_t> shots = kDefaultShots;
  std::string sweep_out;
  sweep_cmd->add_option("--run", sweep_pairs, "K=checkpoint-or-run-dir, repeatable");
  sweep_cmd->add_option("--shots", shots, "shot counts to report")->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "output directory");

  // classify
  auto* cls_cmd = app.add_subcommand("classify", "classifier accuracy with and without generated data");
  ConfigArgs cls_args;
  cls_args.attach(*cls_cmd);
  std::string cls_checkpoint, cls_out;
  cls_cmd->add_option("--checkpoint", cls_checkpoint, "checkpoint directory or 'last'")->required();
  cls_cmd->add_option("--out", cls_out, "output directory");

  // dump-features
  auto* dump_cmd = app.add_subcommand("dump-features", "encoder feature-map heatmaps");
  ConfigArgs dump_args;
  dump_args.attach(*dump_cmd);
  std::string dump_checkpoint, dump_out;
  std::vector<std::string> dump_images;
  dump_cmd->add_option("--checkpoint", dump_checkpoint, "checkpoint directory or 'last'")->required();
  dump_cmd->add_option("--images", dump_images, "input image files")->required();
  dump_cmd->add_option("--out", dump_out, "output directory");

  // make-synthetic
  auto* syn_cmd = app.add_subcommand("make-synthetic", "write a procedural image dataset");
  SyntheticOptions syn;
  std::string syn_out, syn_style = "shapes";
  syn_cmd->add_option("--out", syn_out, "dataset root")->required();
  syn_cmd->add_option("--categories", syn.categories, "number of categories");
  syn_cmd->add_option("--images-per-category", syn.images_per_category, "images per category");
  syn_cmd->add_option("--image-size", syn.image_size, "side length in pixels");
  syn_cmd->add_option("--style", syn_style, "shapes | separable");
  syn_cmd->add_option("--seed", syn.seed, "random seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n" << app.help();
    return kUsage;
  }

  try {
    if (*train_cmd) {
      RunConfig cfg = train_args.resolve(*train_cmd);
      TrainOptions options;
      if (!resume.empty()) options.resume_from = resolve_checkpoint(resume, cfg);
      if (stop_after > 0) options.stop_after = stop_after;
      options.verbose = !quiet;
      // A resumed run continues with the configuration stored in its checkpoint.
      if (options.resume_from) cfg = checkpoint_config(*options.resume_from);
      const auto dataset = std::make_shared<const Dataset>(load_dataset(cfg.dataset_spec(), cfg.split_seed));
      const auto result = train(cfg, dataset, options);
      write_run_manifest(cfg.resolved_output_dir(), cfg, command);
      out << "checkpoint: " << result.final_checkpoint.string() << "\n"
          << "parameter_hash: " << result.parameter_hash << "\n";
      return kOk;
    }
    if (*gen_cmd) {
      RunConfig base = gen_args.resolve(*gen_cmd);
      const fs::path ckpt = resolve_checkpoint(gen_checkpoint, base);
      auto loaded = load_generator(ckpt);
      if (gen_images.size() < 2) throw ValidationError("--images needs at least 2 files");
      if (gen_count < 1) throw ValidationError("--count must be positive");
      const auto task = torch::stack(read_images(gen_images, loaded.config.image_size));
      const fs::path dir = output_dir(gen_out, loaded.config, "generated");
      fs::create_directories(dir);
      write_run_manifest(dir, loaded.config, command);
      Rng rng(gen_seed);
      torch::NoGradGuard no_grad;
      std::vector<torch::Tensor> made;
      for (int64_t i = 0; i < gen_count; ++i) {
        const auto plan = fusion::sample_plan(task.size(0), rng);
        made.push_back(loaded.generator->generate(task.unsqueeze(0), {plan}).images[0]);
        char name[32];
        std::snprintf(name, sizeof(name), "gen_%04lld.png", static_cast<long long>(i));
        image_io::write_rgb(dir / name, made.back());
      }
      image_io::write_rgb(dir / "grid.png", image_io::make_grid(torch::stack(made), 8));
      out << "wrote " << gen_count << " images to " << dir.string() << "\n";
      return kOk;
    }
    if (*eval_cmd) {
      RunConfig base = eval_args.resolve(*eval_cmd);
      const fs::path ckpt = resolve_checkpoint(eval_checkpoint_spec, base);
      RunConfig cfg = config_for(eval_args, *eval_cmd, base, ckpt);
      if (per_category > 0) set_config_value(cfg, "eval_per_category", std::to_string(per_category));
      cfg.validate();
      EvalOptions options = EvalOptions::from(cfg);
      options.output_dir = output_dir(eval_out, cfg, "eval");
      fs::create_directories(options.output_dir);
      write_run_manifest(options.output_dir, cfg, command);
      const auto report = eval_checkpoint(ckpt, cfg, options);
      out << "fid: " << report.fid << "\nlpips: " << report.lpips << "\n"
          << "report: " << (options.output_dir / "eval.csv").string() << "\n";
      return kOk;
    }
    if (*sweep_cmd) {
      RunConfig base = sweep_args.resolve(*sweep_cmd);
      std::map<int64_t, fs::path> checkpoints;
      for (const auto& pair : sweep_pairs) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos) throw UsageError("--run expects K=path, got '" + pair + "'");
        const int64_t k = std::stoll(pair.substr(0, eq));
        try {
          checkpoints[k] = resolve_checkpoint(pair.substr(eq + 1), base);
        } catch (const IoError& e) {
          err << "warning: K=" << k << ": " << e.what() << "; reported as a gap\n";
        }
      }
      const fs::path dir = output_dir(sweep_out, base, "sweep");
      fs::create_directories(dir);
      write_run_manifest(dir, base, command);
      const auto rows = shot_sweep(checkpoints, shots, [&](const fs::path& ckpt, int64_t k) {
        RunConfig cfg = config_for(sweep_args, *sweep_cmd, base, ckpt);
        cfg.eval_k = k;
        EvalOptions options = EvalOptions::from(cfg);
        options.output_dir = dir / ("k" + std::to_string(k));
        return eval_checkpoint(ckpt, cfg, options);
      });
      write_sweep_csv(dir / "sweep.csv", rows);
      write_sweep_svg(dir / "sweep.svg", rows);
      for (const auto& r : rows) {
        out << "K=" << r.k << " fid=" << (r.fid ? std::to_string(*r.fid) : std::string("gap")) << "\n";
      }
      return kOk;
    }
    if (*cls_cmd) {
      RunConfig base = cls_args.resolve(*cls_cmd);
      const fs::path ckpt = resolve_checkpoint(cls_checkpoint, base);
      RunConfig cfg = config_for(cls_args, *cls_cmd, base, ckpt);
      auto loaded = load_generator(ckpt);
      const Dataset dataset = load_dataset(cfg.dataset_spec(), cfg.split_seed);
      const auto splits = classification_splits(dataset, {cfg.cls_train, cfg.cls_val, cfg.cls_test}, cfg.eval_seed);
      const fs::path dir = output_dir(cls_out, cfg, "classify");
      fs::create_directories(dir);
      write_run_manifest(dir, cfg, command);
      write_split_manifest(dir / "classification_split.csv", dataset, splits);
      const auto result = augment_classification(loaded.generator, dataset, splits, ClassifierTraining::from(cfg));
      nlohmann::json j = {{"base_accuracy", result.base_accuracy},
                          {"augmented_accuracy", result.augmented_accuracy},
                          {"base_val_accuracy", result.base_val_accuracy},
                          {"augmented_val_accuracy", result.augmented_val_accuracy},
                          {"generated_images", result.generated_images}};
      std::ofstream(dir / "classification.json") << j.dump(2) << "\n";
      out << "base top-1: " << result.base_accuracy << "\naugmented top-1: " << result.augmented_accuracy << "\n";
      return kOk;
    }
    if (*dump_cmd) {
      RunConfig base = dump_args.resolve(*dump_cmd);
      const fs::path ckpt = resolve_checkpoint(dump_checkpoint, base);
      auto loaded = load_generator(ckpt);
      const fs::path dir = output_dir(dump_out, loaded.config, "features");
      fs::create_directories(dir);
      write_run_manifest(dir, loaded.config, command);
      const auto files = dump_feature_maps(loaded.generator,
                                           torch::stack(read_images(dump_images, loaded.config.image_size)), dir);
      out << "wrote " << files.size() << " heatmaps to " << dir.string() << "\n";
      return kOk;
    }
    if (*syn_cmd) {
      syn.style = parse_synthetic_style(syn_style);
      make_synthetic_dataset(syn_out, syn);
      nlohmann::json j = {{"command", command},
                          {"seed", syn.seed},
                          {"categories", syn.categories},
                          {"images_per_category", syn.images_per_category},
                          {"image_size", syn.image_size},
                          {"style", syn_style},
                          {"code_version", code_version()}};
      std::ofstream(fs::path(syn_out) / "manifest.json") << j.dump(2) << "\n";
      out << "wrote synthetic dataset to " << syn_out << "\n";
      return kOk;
    }
  } catch (const ConfigError& e) {
    err << "error: config: " << e.what() << "\n";
    return kConfig;
  } catch (const UsageError& e) {
    err << "error: usage: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace eqgan::cli
