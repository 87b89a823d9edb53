#include "eqgan/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "eqgan/errors.hpp"
#include "eqgan/fusion.hpp"
#include "eqgan/image_io.hpp"
#include "eqgan/trainer.hpp"

namespace fs = std::filesystem;

namespace eqgan {

EvalOptions EvalOptions::from(const RunConfig& config) {
  EvalOptions o;
  o.per_category = config.eval_per_category;
  o.k = config.eval_k;
  o.seed = config.eval_seed;
  return o;
}

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void MetricReport::write_csv(const fs::path& path) const {
  auto out = open_out(path);
  out << "category,name,fid,lpips,conditioning_images,reference_images\n";
  for (const auto& c : categories) {
    out << c.category_id << ',' << c.name << ',' << fmt(c.fid) << ',' << fmt(c.lpips) << ','
        << c.conditioning_images << ',' << c.reference_images << '\n';
  }
}

void MetricReport::write_json(const fs::path& path) const {
  nlohmann::json j = {{"fid", fid},
                      {"lpips", lpips},
                      {"categories", categories.size()},
                      {"checkpoint_hash", checkpoint_hash},
                      {"k", k},
                      {"per_category", per_category},
                      {"seed", seed},
                      {"fid_embedder", fid_embedder},
                      {"lpips_embedder", lpips_embedder}};
  open_out(path) << j.dump(2) << '\n';
}

torch::Tensor generate_for_category(Generator& generator, const Dataset& dataset,
                                    int64_t category_id, const std::vector<int64_t>& pool,
                                    int64_t count, int64_t k, Rng& rng, int64_t batch) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> out;
  for (int64_t done = 0; done < count; done += batch) {
    const int64_t n = std::min(batch, count - done);
    std::vector<torch::Tensor> tasks;
    std::vector<fusion::FusionPlan> plans;
    for (int64_t i = 0; i < n; ++i) {
      tasks.push_back(sample_task_from(dataset, category_id, pool, k, rng).images);
      plans.push_back(fusion::sample_plan(k, rng));
    }
    out.push_back(generator->generate(torch::stack(tasks), plans).images);
  }
  return torch::cat(out, 0);
}

MetricReport eval_generation(Generator& generator, const Dataset& dataset,
                             const std::vector<CategorySplit>& splits,
                             const metrics::Embedder& fid_embedder,
                             const metrics::Embedder& lpips_embedder, const EvalOptions& options) {
  if (options.per_category < 2) throw ValidationError("per_category must be at least 2");
  if (options.k < 2) throw ValidationError("conditioning needs K >= 2");
  if (splits.empty()) throw ValidationError("no categories to evaluate");

  MetricReport report;
  report.k = options.k;
  report.per_category = options.per_category;
  report.seed = options.seed;
  report.fid_embedder = fid_embedder.name();
  report.lpips_embedder = lpips_embedder.name();

  const bool write = !options.output_dir.empty();
  generator->eval();
  Rng rng(options.seed);
  for (const auto& split : splits) {
    const std::set<int64_t> conditioning(split.first.begin(), split.first.end());
    for (int64_t index : split.second) {
      if (conditioning.count(index)) {
        throw ValidationError("conditioning and reference sets overlap in category " +
                              std::to_string(split.category_id));
      }
    }
    if (static_cast<int64_t>(split.first.size()) < options.k) {
      throw ValidationError("category " + std::to_string(split.category_id) + " has only " +
                            std::to_string(split.first.size()) + " conditioning images for K=" +
                            std::to_string(options.k));
    }
    if (split.second.size() < 2) {
      throw ValidationError("category " + std::to_string(split.category_id) +
                            " needs at least 2 reference images");
    }
    const auto generated = generate_for_category(generator, dataset, split.category_id, split.first,
                                                 options.per_category, options.k, rng, options.batch);
    const auto reference = dataset.images(split.category_id, split.second);

    CategoryScore score;
    score.category_id = split.category_id;
    score.name = dataset.category(split.category_id).name;
    score.fid = metrics::fid_images(fid_embedder, generated, reference);
    score.lpips = metrics::lpips_diversity(
        lpips_embedder, generated, {options.lpips_max_pairs, options.seed, 64});
    score.conditioning_images = static_cast<int64_t>(split.first.size());
    score.reference_images = static_cast<int64_t>(split.second.size());
    report.categories.push_back(score);

    if (write && options.grid_images > 0) {
      const auto shown = generated.slice(0, 0, std::min(options.grid_images, generated.size(0)));
      image_io::write_rgb(options.output_dir / "grids" / (score.name + ".png"),
                          image_io::make_grid(shown, 8));
    }
  }
  for (const auto& c : report.categories) {
    report.fid += c.fid;
    report.lpips += c.lpips;
  }
  report.fid /= static_cast<double>(report.categories.size());
  report.lpips /= static_cast<double>(report.categories.size());

  if (write) {
    report.write_csv(options.output_dir / "eval.csv");
    report.write_json(options.output_dir / "metrics.json");
  }
  return report;
}

MetricReport eval_checkpoint(const fs::path& checkpoint, const RunConfig& config,
                             const EvalOptions& options) {
  auto loaded = load_generator(checkpoint);
  const Dataset dataset = load_dataset(config.dataset_spec(), config.split_seed);
  const auto splits =
      split_unseen(dataset, {config.unseen_split_first, config.unseen_split_second}, config.eval_seed);
  if (!options.output_dir.empty()) {
    write_split_manifest(options.output_dir / "split_unseen.csv", dataset, splits, "conditioning",
                         "reference");
  }
  const auto fid_embedder = metrics::make_embedder(config.fid_embedder);
  const auto lpips_embedder = metrics::make_embedder(config.lpips_embedder);
  auto report = eval_generation(loaded.generator, dataset, splits, *fid_embedder, *lpips_embedder, options);
  report.checkpoint_hash = loaded.parameter_hash;
  if (!options.output_dir.empty()) report.write_json(options.output_dir / "metrics.json");
  return report;
}

std::vector<SweepRow> shot_sweep(const std::map<int64_t, fs::path>& checkpoints,
                                 const std::vector<int64_t>& shots, const SweepEvaluator& evaluate) {
  std::vector<SweepRow> rows;
  for (int64_t k : shots) {
    SweepRow row;
    row.k = k;
    const auto it = checkpoints.find(k);
    if (it != checkpoints.end() && fs::exists(it->second)) {
      const auto report = evaluate(it->second, k);
      row.fid = report.fid;
      row.lpips = report.lpips;
      row.checkpoint = it->second.string();
    }
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
  auto out = open_out(path);
  out << "k,fid,lpips,checkpoint\n";
  for (const auto& r : rows) {
    out << r.k << ',' << (r.fid ? fmt(*r.fid) : "") << ',' << (r.lpips ? fmt(*r.lpips) : "") << ','
        << r.checkpoint << '\n';
  }
}

void write_sweep_svg(const fs::path& path, const std::vector<SweepRow>& rows) {
  constexpr double width = 480, height = 320, left = 60, right = 20, top = 20, bottom = 50;
  double k_min = 0, k_max = 1, f_max = 1;
  bool first = true;
  for (const auto& r : rows) {
    if (first) k_min = k_max = static_cast<double>(r.k);
    k_min = std::min(k_min, static_cast<double>(r.k));
    k_max = std::max(k_max, static_cast<double>(r.k));
    if (r.fid) f_max = std::max(f_max, *r.fid);
    first = false;
  }
  if (k_max == k_min) k_max = k_min + 1;
  f_max *= 1.1;
  auto x_of = [&](double k) { return left + (k - k_min) / (k_max - k_min) * (width - left - right); };
  auto y_of = [&](double f) { return top + (1.0 - f / f_max) * (height - top - bottom); };

  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right
      << "\" y2=\"" << height - bottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << height - bottom << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (width + left) / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\">shots (K)</text>\n";
  out << "<text x=\"15\" y=\"" << (height - bottom + top) / 2 << "\" transform=\"rotate(-90 15 "
      << (height - bottom + top) / 2 << ")\" text-anchor=\"middle\">FID</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double f = f_max * t / 4.0;
    out << "<text x=\"" << left - 5 << "\" y=\"" << y_of(f) + 4 << "\" text-anchor=\"end\">"
        << fmt(std::round(f * 100) / 100) << "</text>\n";
  }
  std::string segment;
  auto flush = [&] {
    if (!segment.empty()) {
      out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"" << segment
          << "\"/>\n";
    }
    segment.clear();
  };
  for (const auto& r : rows) {
    const double x = x_of(static_cast<double>(r.k));
    out << "<text x=\"" << x << "\" y=\"" << height - bottom + 16 << "\" text-anchor=\"middle\">"
        << r.k << "</text>\n";
    if (!r.fid) {
      flush();
      continue;
    }
    segment += fmt(x) + "," + fmt(y_of(*r.fid)) + " ";
  }
  flush();
  for (const auto& r : rows) {
    if (!r.fid) continue;
    out << "<circle cx=\"" << x_of(static_cast<double>(r.k)) << "\" cy=\"" << y_of(*r.fid)
        << "\" r=\"4\" fill=\"steelblue\"/>\n";
  }
  out << "</svg>\n";
}

std::vector<fs::path> dump_feature_maps(Generator& generator, const torch::Tensor& images,
                                        const fs::path& out_dir, const std::string& prefix) {
  torch::NoGradGuard no_grad;
  generator->eval();
  const auto pyramid = generator->encode(images);
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (int64_t n = 0; n < images.size(0); ++n) {
    for (size_t b = 0; b < pyramid.levels.size(); ++b) {
      const auto path = out_dir / (prefix + std::to_string(n) + "_B" + std::to_string(b) + ".png");
      image_io::write_heatmap(path, pyramid.levels[b][n].mean(0));
      written.push_back(path);
    }
  }
  return written;
}

}  // namespace eqgan
