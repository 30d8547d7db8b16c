// raresynth: rare-class synthetic augmentation pipeline.
//
// Subcommands: pretrain | finetune | generate | sweep | diversity | report.
// The RARESYNTH_PROFILE environment variable (desk | paper) selects the
// default configuration bundle; --config overlays a JSON document on top.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "raresynth/checkpoint.hpp"
#include "raresynth/config.hpp"
#include "raresynth/diversity.hpp"
#include "raresynth/errors.hpp"
#include "raresynth/io_png.hpp"
#include "raresynth/io_util.hpp"
#include "raresynth/svg.hpp"
#include "raresynth/sweep.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace raresynth;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  int jobs = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config overlay");
  cmd->add_option("--out", o.out_dir, "output directory (overrides config)");
  cmd->add_option("--seed", o.seed, "global seed (overrides config)");
  cmd->add_option("--jobs", o.jobs, "concurrent runs for sweep (overrides config)");
}

PipelineConfig resolve_config(const CommonOpts& o) {
  const char* env = std::getenv("RARESYNTH_PROFILE");
  const std::string profile = env && *env ? env : "desk";
  PipelineConfig cfg = o.config_path.empty() ? default_config(profile)
                                             : load_config_file(o.config_path, profile);
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  if (o.jobs > 0) cfg.jobs = o.jobs;
  return cfg;
}

void write_resolved(const PipelineConfig& cfg) {
  write_file_atomic((fs::path(cfg.out_dir) / "resolved_config.json").string(),
                    resolved_config_string(cfg));
}

std::string loss_log_csv(const std::vector<StepLoss>& log) {
  std::string out = "step,loss\n";
  for (const auto& [step, loss] : log)
    out += std::to_string(step) + "," + format_sig6(loss) + "\n";
  return out;
}

void write_png_atomic(const std::string& path, const Tensor<float>& img) {
  const std::string tmp = path + ".tmp";
  write_png_gray8(tmp, img);
  fs::rename(tmp, path);
}

Dataset load_dir_or_manifest(const std::string& dir, int target_size) {
  const fs::path manifest = fs::path(dir) / "manifest.csv";
  if (fs::exists(manifest)) return load_image_dir(manifest.string(), target_size);
  Dataset out;
  out.domain = "imported";
  out.note = "loaded from " + dir + " (no manifest, *.png sorted by name)";
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    LabeledSample s;
    s.image = resize_bilinear(read_png_gray(f.string()), target_size, target_size);
    s.label = Label::positive;
    s.origin = Origin::real;
    s.id = f.filename().string();
    out.samples.push_back(std::move(s));
  }
  if (out.samples.empty()) throw IoError("no manifest.csv and no *.png files in " + dir);
  return out;
}

int cmd_pretrain(const CommonOpts& o) {
  PipelineConfig cfg = resolve_config(o);
  fs::create_directories(cfg.out_dir);
  PretrainResult pr = pretrain_base_model(cfg);
  const NoiseSchedule sched = build_noise_schedule(cfg.schedule.T, cfg.schedule.kind);
  save_diffusion_checkpoint((fs::path(cfg.out_dir) / "base_model.rsck").string(),
                            pr.model, sched, cfg.schedule.kind);
  write_file_atomic((fs::path(cfg.out_dir) / "pretrain_loss.csv").string(),
                    loss_log_csv(pr.log));
  write_resolved(cfg);
  std::fprintf(stderr, "[pretrain] %lld parameters -> %s/base_model.rsck\n",
               static_cast<long long>(pr.model.param_count()), cfg.out_dir.c_str());
  return 0;
}

int cmd_finetune(const CommonOpts& o, const std::string& base_path,
                 const std::string& rare_manifest) {
  PipelineConfig cfg = resolve_config(o);
  fs::create_directories(cfg.out_dir);
  LoadedDiffusion base = load_diffusion_checkpoint(base_path);
  Dataset rare;
  if (!rare_manifest.empty()) {
    rare = load_image_dir(rare_manifest, cfg.domain_params.image_size);
    for (auto& s : rare.samples) s.label = Label::positive;  // rare-class set
  } else {
    rare = make_split_for(cfg).lora_set;
  }
  FinetuneResult ft = finetune_adapter_for(cfg, base.model, rare);
  save_adapter_checkpoint((fs::path(cfg.out_dir) / "lora_adapter.rsck").string(),
                          ft.model);
  write_file_atomic((fs::path(cfg.out_dir) / "finetune_loss.csv").string(),
                    loss_log_csv(ft.log));
  write_resolved(cfg);
  return 0;
}

int cmd_generate(const CommonOpts& o, const std::string& base_path,
                 const std::string& adapter_path, int count) {
  PipelineConfig cfg = resolve_config(o);
  fs::create_directories(fs::path(cfg.out_dir) / "images");
  LoadedDiffusion base = load_diffusion_checkpoint(base_path);
  UNet<float> model = base.model;
  if (!adapter_path.empty()) {
    AdaptedModel<float> adapted = load_adapter_checkpoint(adapter_path, base.model);
    model = merge_lora(adapted);
  }
  Dataset pool = generate_pool_for(cfg, model, count);
  std::string manifest = "path,label\n";
  for (std::size_t i = 0; i < pool.samples.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "images/img_%05zu.png", i);
    write_png_atomic((fs::path(cfg.out_dir) / name).string(), pool.samples[i].image);
    manifest += std::string(name) + ",1\n";
  }
  write_file_atomic((fs::path(cfg.out_dir) / "manifest.csv").string(), manifest);
  write_resolved(cfg);
  std::fprintf(stderr, "[generate] wrote %zu images to %s/images\n",
               pool.samples.size(), cfg.out_dir.c_str());
  return 0;
}

int cmd_sweep(const CommonOpts& o) {
  PipelineConfig cfg = resolve_config(o);
  fs::create_directories(cfg.out_dir);
  SweepOutput sw = run_sweep(cfg);
  const fs::path out(cfg.out_dir);
  write_file_atomic((out / "results.csv").string(), results_csv(sw.results));
  write_file_atomic((out / "aggregate.csv").string(), aggregate_csv(sw.aggregate));
  write_file_atomic((out / "sweep_plot.svg").string(), sweep_plot_svg(sw.aggregate));
  const NoiseSchedule sched = build_noise_schedule(cfg.schedule.T, cfg.schedule.kind);
  if (cfg.sweep.base_checkpoint.empty())
    save_diffusion_checkpoint((out / "base_model.rsck").string(), *sw.base_model, sched,
                              cfg.schedule.kind);
  if (sw.adapter)
    save_adapter_checkpoint((out / "lora_adapter.rsck").string(), *sw.adapter);
  if (sw.reference_classifier)
    save_classifier_checkpoint((out / "classifier.rsck").string(),
                               *sw.reference_classifier);
  if (!sw.pretrain_log.empty())
    write_file_atomic((out / "pretrain_loss.csv").string(), loss_log_csv(sw.pretrain_log));
  if (!sw.finetune_log.empty())
    write_file_atomic((out / "finetune_loss.csv").string(), loss_log_csv(sw.finetune_log));
  write_resolved(cfg);
  std::fputs(format_report_table(sw.aggregate).c_str(), stdout);
  return 0;
}

json distribution_to_json(const Distribution& d) {
  return json{{"count", d.count},     {"mean", d.mean}, {"stddev", d.stddev},
              {"min", d.min},         {"max", d.max},   {"q25", d.q25},
              {"q50", d.q50},         {"q75", d.q75},   {"bin_edges", d.bin_edges},
              {"bin_counts", d.bin_counts}};
}

int cmd_diversity(const CommonOpts& o, const std::string& real_dir,
                  const std::string& synth_dir, const std::string& classifier_path) {
  PipelineConfig cfg = resolve_config(o);
  fs::create_directories(cfg.out_dir);
  ClassifierModel<float> clf = load_classifier_checkpoint(classifier_path);
  const int side = clf.input_size;
  const Dataset real = load_dir_or_manifest(real_dir, side);
  const Dataset synth = load_dir_or_manifest(synth_dir, side);
  DiversityReport r =
      compare_diversity(real, synth, clf, cfg.diversity.max_pairs, cfg.seed,
                        cfg.diversity.psnr_shift_db, cfg.diversity.collapse_std_ratio);
  json j;
  j["metric_name"] = "perceptual-distance (surrogate)";
  j["psnr_real"] = distribution_to_json(r.psnr_real);
  j["psnr_synth"] = distribution_to_json(r.psnr_synth);
  j["percep_real"] = distribution_to_json(r.percep_real);
  j["percep_synth"] = distribution_to_json(r.percep_synth);
  j["shift"] = {{"psnr_mean_shift_db", r.psnr_mean_shift},
                {"percep_mean_shift", r.percep_mean_shift},
                {"ks_psnr", r.ks_psnr},
                {"ks_percep", r.ks_percep}};
  j["verdicts"] = {{"structure_preserved", r.structure_preserved},
                   {"collapse_suspected", r.collapse_suspected}};
  j["config"] = {{"budget", r.budget},
                 {"seed", r.seed},
                 {"psnr_shift_db_threshold", r.psnr_shift_db_threshold},
                 {"collapse_std_ratio", r.collapse_std_ratio}};
  const fs::path out(cfg.out_dir);
  write_file_atomic((out / "diversity_report.json").string(), j.dump(2) + "\n");
  write_file_atomic((out / "psnr_hist.svg").string(),
                    render_histogram_overlay("PSNR, pairwise (dB)", "PSNR (dB)",
                                             r.psnr_real, "real", r.psnr_synth,
                                             "synthetic"));
  write_file_atomic(
      (out / "percep_hist.svg").string(),
      render_histogram_overlay("Perceptual distance (surrogate), pairwise", "distance",
                               r.percep_real, "real", r.percep_synth, "synthetic"));
  write_resolved(cfg);
  std::fprintf(stderr,
               "[diversity] psnr shift %.3f dB, percep shift %.4f, "
               "structure_preserved=%s collapse_suspected=%s\n",
               r.psnr_mean_shift, r.percep_mean_shift,
               r.structure_preserved ? "true" : "false",
               r.collapse_suspected ? "true" : "false");
  return 0;
}

int cmd_report(const std::string& results_path) {
  const auto rows = parse_results_csv(read_file(results_path));
  std::fputs(format_report_table(aggregate_results(rows)).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rare-class synthetic data augmentation laboratory"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string base_path, adapter_path, rare_manifest, real_dir, synth_dir;
  std::string classifier_path, results_path;
  int gen_count = 200;

  auto* c_pre = app.add_subcommand("pretrain", "train the base diffusion model");
  add_common(c_pre, opts);

  auto* c_ft = app.add_subcommand("finetune", "fit a low-rank adapter on the rare set");
  add_common(c_ft, opts);
  c_ft->add_option("--base", base_path, "base model checkpoint")->required();
  c_ft->add_option("--rare-manifest", rare_manifest,
                   "manifest of real rare-class images (default: procedural rare set)");

  auto* c_gen = app.add_subcommand("generate", "sample synthetic positives");
  add_common(c_gen, opts);
  c_gen->add_option("--base", base_path, "base model checkpoint")->required();
  c_gen->add_option("--adapter", adapter_path, "adapter checkpoint to merge");
  c_gen->add_option("--count", gen_count, "number of images");

  auto* c_sw = app.add_subcommand("sweep", "run the ratio grid end to end");
  add_common(c_sw, opts);

  auto* c_div = app.add_subcommand("diversity", "pairwise diversity report");
  add_common(c_div, opts);
  c_div->add_option("--real-dir", real_dir, "directory of real positives")->required();
  c_div->add_option("--synth-dir", synth_dir, "directory of synthetic positives")
      ->required();
  c_div->add_option("--classifier", classifier_path, "classifier checkpoint")
      ->required();

  auto* c_rep = app.add_subcommand("report", "format a results table");
  c_rep->add_option("--results", results_path, "results.csv path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_pre->parsed()) return cmd_pretrain(opts);
    if (c_ft->parsed()) return cmd_finetune(opts, base_path, rare_manifest);
    if (c_gen->parsed()) return cmd_generate(opts, base_path, adapter_path, gen_count);
    if (c_sw->parsed()) return cmd_sweep(opts);
    if (c_div->parsed()) return cmd_diversity(opts, real_dir, synth_dir, classifier_path);
    if (c_rep->parsed()) return cmd_report(results_path);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: invalid-argument: %s\n", e.what());
    return 1;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: format: %s\n", e.what());
    return 1;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: io: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
